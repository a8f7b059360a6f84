//! End-to-end training on a raw table and the persisted model format.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{fit_normalization, DataError, EncodedDataset, Encoder, NormParams, RawTable};
use crate::eval::{auc, best_threshold, sigmoid, MetricError};
use crate::expr::{DisplayExpression, Equation, ExprError, GrammarConfig, SummandKind};
use crate::optimize::OptimizerConfig;
use crate::search::{beam_search_with_progress, Progress, SearchConfig, SearchError};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("model file: {0}")]
    Format(String),
    #[error("model version {found} not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

/// Everything that controls a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub search: SearchConfig,
    pub optimizer: OptimizerConfig,
    pub variants: Vec<SummandKind>,
    pub rare_threshold: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            optimizer: OptimizerConfig::default(),
            variants: vec![SummandKind::Linear, SummandKind::Product, SummandKind::Exp],
            rare_threshold: crate::data::DEFAULT_RARE_THRESHOLD,
        }
    }
}

impl TrainSettings {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.search.seed = seed;
        self.optimizer.seed = seed;
        self
    }

    pub fn grammar(&self, n_features: usize) -> GrammarConfig {
        GrammarConfig {
            variants: self.variants.clone(),
            n_features,
            max_summands: self.search.max_depth,
            max_constants: None,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("settings serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub config_digest: String,
    pub settings: TrainSettings,
    pub train_rows: usize,
    pub train_loss: f64,
    pub train_auc: Option<f64>,
    pub train_accuracy: f64,
    pub depth: usize,
}

/// A trained classifier: encoder, normalization, equation and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub equation: Equation,
    pub feature_names: Vec<String>,
    pub encoder: Encoder,
    pub norm_params: Vec<NormParams>,
    /// Decision threshold on the equation value; `label = f(x) >= threshold`.
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub probability: f64,
    pub label: bool,
}

/// Fits encoder and normalization on `rows`, searches an equation and picks
/// the accuracy-maximizing threshold on the same rows.
pub fn train(
    table: &RawTable,
    labels: &[bool],
    rows: &[usize],
    settings: &TrainSettings,
    progress: impl FnMut(Progress),
) -> Result<ModelFile, ModelError> {
    let encoder = Encoder::fit(table, rows, settings.rare_threshold);
    let raw = encoder.transform(table, rows)?;
    let width = encoder.n_features();
    if width == 0 {
        return Err(DataError::Invalid("no feature columns".into()).into());
    }
    let norm = fit_normalization(&raw, width);
    let y: Vec<bool> = rows.iter().map(|&r| labels[r]).collect();
    let data = EncodedDataset::with_params(raw, width, y, encoder.feature_names(), norm.clone())?;
    train_encoded(&data, encoder, settings, progress)
}

/// Training on an already-encoded dataset.
pub fn train_encoded(
    data: &EncodedDataset,
    encoder: Encoder,
    settings: &TrainSettings,
    progress: impl FnMut(Progress),
) -> Result<ModelFile, ModelError> {
    let grammar = settings.grammar(data.n_features());
    let best = beam_search_with_progress(data, &grammar, &settings.search, &settings.optimizer, progress)?;
    let mut overflow = false;
    let scores: Vec<f64> = data
        .rows()
        .map(|x| best.equation.value_unchecked(x, &mut overflow))
        .collect();
    let threshold = best_threshold(&scores, data.labels())?;
    Ok(ModelFile {
        version: MODEL_FORMAT_VERSION,
        equation: best.equation,
        feature_names: data.feature_names().to_vec(),
        encoder,
        norm_params: data.norm_params().to_vec(),
        threshold: threshold.threshold,
        metadata: TrainingMetadata {
            seed: settings.search.seed,
            config_digest: settings.digest(),
            settings: settings.clone(),
            train_rows: data.len(),
            train_loss: best.train_loss,
            train_auc: auc(&scores, data.labels()).ok(),
            train_accuracy: threshold.accuracy,
            depth: best.depth,
        },
    })
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if header.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version {
                found: header.version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))
    }

    /// Equation values for already-encoded, normalized rows.
    pub fn score_normalized(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(self.equation.evaluate(x)?)
    }

    pub fn predict_normalized(&self, x: &[f64]) -> Result<Prediction, ModelError> {
        let score = self.score_normalized(x)?;
        Ok(self.prediction(score))
    }

    fn prediction(&self, score: f64) -> Prediction {
        Prediction {
            score,
            probability: sigmoid(score),
            label: score >= self.threshold,
        }
    }

    /// Encodes, normalizes and scores every row of a raw table.
    pub fn predict_table(&self, table: &RawTable) -> Result<Vec<Prediction>, ModelError> {
        let rows: Vec<usize> = (0..table.n_rows).collect();
        self.predict_rows(table, &rows)
    }

    pub fn predict_rows(&self, table: &RawTable, rows: &[usize]) -> Result<Vec<Prediction>, ModelError> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let raw = self.encoder.transform(table, rows)?;
        let width = self.norm_params.len();
        raw.chunks_exact(width)
            .map(|row| {
                let x: Vec<f64> = row
                    .iter()
                    .zip(&self.norm_params)
                    .map(|(&v, p)| p.apply(v))
                    .collect();
                self.predict_normalized(&x)
            })
            .collect()
    }

    /// Probability-space threshold equivalent to [`ModelFile::threshold`].
    pub fn probability_threshold(&self) -> f64 {
        sigmoid(self.threshold)
    }

    /// The equation over raw (pre-normalization) encoded features.
    pub fn display_expression(&self) -> Result<DisplayExpression, ModelError> {
        let mins: Vec<f64> = self.norm_params.iter().map(|p| p.min).collect();
        let ranges: Vec<f64> = self.norm_params.iter().map(|p| p.range).collect();
        Ok(self.equation.denormalize(&mins, &ranges)?)
    }

    pub fn equation_string(&self, precision: usize) -> Result<String, ModelError> {
        Ok(self.equation.to_infix_string(&self.feature_names, precision)?)
    }

    pub fn raw_equation_string(&self, precision: usize) -> Result<String, ModelError> {
        Ok(self
            .display_expression()?
            .to_infix_string(&self.feature_names, precision)?)
    }
}

/// Serializes `±∞` as the strings `"inf"` / `"-inf"`; finite values as numbers.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad number '{other}'"))),
            },
        }
    }
}
