//! Beam search over equation structures.
//!
//! Level 0 is the optimized constant model. Every level refines each beam
//! member by one summand, fits the constants of every new structure, and
//! keeps the `w` lowest-loss distinct structures among the new children and
//! the current beam. The best candidate seen at any level is returned.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EncodedDataset;
use crate::expr::{Equation, GrammarConfig, SummandShape};
use crate::optimize::{mean_log_loss, optimize_constants_from, FitResult, OptimizeError, OptimizerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("training data contains a single class")]
    Unlearnable,
    #[error("training data is empty")]
    Empty,
    #[error("invalid search config: {0}")]
    Config(String),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub beam_width: usize,
    pub max_depth: usize,
    pub restarts_per_candidate: usize,
    pub seed: u64,
    /// Worker threads for candidate fitting; 0 uses the global pool. Not
    /// serialized: results do not depend on it.
    #[serde(skip, default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            beam_width: 10,
            max_depth: 3,
            restarts_per_candidate: 3,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub equation: Equation,
    pub train_loss: f64,
    pub depth: usize,
}

impl ScoredCandidate {
    /// Lower loss first, then fewer constants, then canonical structure order.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.train_loss
            .total_cmp(&other.train_loss)
            .then(
                self.equation
                    .constant_count()
                    .cmp(&other.equation.constant_count()),
            )
            .then(self.equation.structure_cmp(&other.equation))
    }
}

/// Reported once per completed level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub depth: usize,
    pub candidates_evaluated: usize,
    pub best_loss: f64,
}

/// Mean training log loss of `eq` after the logistic transform.
pub fn score(eq: &Equation, data: &EncodedDataset) -> f64 {
    mean_log_loss(eq, data)
}

pub fn beam_search(
    data: &EncodedDataset,
    grammar: &GrammarConfig,
    cfg: &SearchConfig,
    opt: &OptimizerConfig,
) -> Result<ScoredCandidate, SearchError> {
    beam_search_with_progress(data, grammar, cfg, opt, |_| {})
}

pub fn beam_search_with_progress(
    data: &EncodedDataset,
    grammar: &GrammarConfig,
    cfg: &SearchConfig,
    opt: &OptimizerConfig,
    mut progress: impl FnMut(Progress),
) -> Result<ScoredCandidate, SearchError> {
    if cfg.beam_width == 0 || cfg.max_depth == 0 || cfg.restarts_per_candidate == 0 {
        return Err(SearchError::Config(
            "beam_width, max_depth and restarts_per_candidate must be positive".into(),
        ));
    }
    opt.validate()?;
    if data.is_empty() {
        return Err(SearchError::Empty);
    }
    if !data.has_both_classes() {
        return Err(SearchError::Unlearnable);
    }
    let pool = match cfg.workers {
        0 | 1 => None,
        n => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SearchError::Config(e.to_string()))?,
        ),
    };
    let fitter = Fitter {
        data,
        cfg,
        opt,
        pool: pool.as_ref(),
        parallel: cfg.workers != 1,
    };

    let mut evaluated = 0;
    let root = fitter.fit_all(&[(Equation::constant(0.0), None)], 0)?;
    evaluated += root.len();
    let mut best = root[0].clone();
    let mut beam = root;
    progress(Progress {
        depth: 0,
        candidates_evaluated: evaluated,
        best_loss: best.train_loss,
    });

    let mut fitted: HashMap<Vec<SummandShape>, ScoredCandidate> = HashMap::new();
    for member in &beam {
        fitted.insert(member.equation.shapes(), member.clone());
    }

    for depth in 1..=cfg.max_depth {
        // New structures in enumeration order: parents in beam order, children
        // in canonical shape order, first occurrence wins.
        let mut seen = BTreeSet::new();
        let mut fresh = Vec::new();
        for member in &beam {
            for child in member.equation.refinements(grammar) {
                let key = child.shapes();
                if !fitted.contains_key(&key) && seen.insert(key) {
                    fresh.push((child, Some(&member.equation)));
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        let children = fitter.fit_all(&fresh, depth)?;
        evaluated += children.len();
        for c in &children {
            fitted.insert(c.equation.shapes(), c.clone());
        }
        let mut pool: Vec<ScoredCandidate> = beam.iter().cloned().chain(children).collect();
        pool.sort_by(ScoredCandidate::rank_cmp);
        pool.truncate(cfg.beam_width);
        beam = pool;
        if beam[0].rank_cmp(&best) == Ordering::Less {
            best = beam[0].clone();
        }
        progress(Progress {
            depth,
            candidates_evaluated: evaluated,
            best_loss: best.train_loss,
        });
    }
    Ok(best)
}

struct Fitter<'a> {
    data: &'a EncodedDataset,
    cfg: &'a SearchConfig,
    opt: &'a OptimizerConfig,
    pool: Option<&'a rayon::ThreadPool>,
    parallel: bool,
}

impl Fitter<'_> {
    /// Fits every structure; output order matches input order.
    fn fit_all(
        &self,
        eqs: &[(Equation, Option<&Equation>)],
        depth: usize,
    ) -> Result<Vec<ScoredCandidate>, SearchError> {
        let run = || -> Result<Vec<ScoredCandidate>, SearchError> {
            if self.parallel {
                eqs.par_iter().map(|(eq, parent)| self.fit_one(eq, *parent, depth)).collect()
            } else {
                eqs.iter().map(|(eq, parent)| self.fit_one(eq, *parent, depth)).collect()
            }
        };
        match self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }

    /// The first restart starts from the parent's fitted constants, with the
    /// added summand's constants drawn from the init policy; the others start
    /// from random vectors.
    fn fit_one(
        &self,
        eq: &Equation,
        parent: Option<&Equation>,
        depth: usize,
    ) -> Result<ScoredCandidate, SearchError> {
        let base = structure_seed(self.cfg.seed, &eq.shapes());
        let mut best: Option<FitResult> = None;
        for restart in 0..self.cfg.restarts_per_candidate {
            let opt = OptimizerConfig {
                seed: splitmix64(base ^ restart as u64),
                ..*self.opt
            };
            let start = match parent {
                Some(parent) if restart == 0 => Some(inherited_start(eq, parent, &opt)),
                _ => None,
            };
            let fit = optimize_constants_from(eq, self.data, &opt, start.as_deref())?;
            if best.as_ref().is_none_or(|b| fit.final_loss < b.final_loss) {
                best = Some(fit);
            }
        }
        let fit = best.expect("at least one restart");
        Ok(ScoredCandidate {
            equation: fit.equation,
            train_loss: fit.final_loss,
            depth,
        })
    }
}

fn inherited_start(child: &Equation, parent: &Equation, opt: &OptimizerConfig) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(opt.seed ^ WARM_START_STREAM));
    let mut start = vec![parent.intercept()];
    for s in child.summands() {
        let shape = s.shape();
        match parent.summands().iter().find(|p| p.shape() == shape) {
            Some(p) => start.extend(p.constants()),
            None => start.extend(
                (0..shape.constant_count()).map(|_| rng.random_range(-opt.init_range..opt.init_range)),
            ),
        }
    }
    start
}

const WARM_START_STREAM: u64 = 0x5741_524D;

/// Seed for a structure: depends only on the search seed and the shape list,
/// so a structure gets the same restarts however it was reached.
pub fn structure_seed(seed: u64, shapes: &[SummandShape]) -> u64 {
    let mut h = splitmix64(seed);
    for shape in shapes {
        let (tag, a, b) = match *shape {
            SummandShape::Linear(f) => (1u64, f.0 as u64, 0),
            SummandShape::Product(x, y) => (2, x.0 as u64, y.0 as u64),
            SummandShape::Exp(f) => (3, f.0 as u64, 0),
            SummandShape::Power(f, d) => (4, f.0 as u64, u64::from(d)),
        };
        h = splitmix64(h ^ tag);
        h = splitmix64(h ^ a);
        h = splitmix64(h ^ b);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
