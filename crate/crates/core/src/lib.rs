//! Equation discovery for binary classification.
//!
//! A classifier is a single analytic equation `f`; a point is positive when
//! `f(x)` clears a threshold. Structures are explored by beam search over a
//! small summand grammar, with constants fitted per candidate against the
//! training log loss.

pub mod data;
pub mod eval;
pub mod expr;
pub mod model;
pub mod optimize;
pub mod search;
pub mod synth;

pub use data::{EncodedDataset, Encoder, FoldPlan, NormParams, RawTable, Schema};
pub use eval::{auc, best_threshold, log_loss, paired_t_test, sigmoid};
pub use expr::{Equation, FeatureId, GrammarConfig, Summand, SummandKind, SummandShape};
pub use model::{train, ModelFile, TrainSettings};
pub use optimize::{optimize_constants, FitResult, OptimizerConfig};
pub use search::{beam_search, ScoredCandidate, SearchConfig};
