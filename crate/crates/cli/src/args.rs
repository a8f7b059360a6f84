use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use edc_core::data::{parse_delimiter, Schema};
use edc_core::model::TrainSettings;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "edc",
    version,
    about = "Equation discovery for binary classification"
)]
pub struct Cli {
    /// Seed for every random choice (fold plans, initializations, synthetic data).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a labelled CSV and print its equation.
    Fit {
        #[command(flatten)]
        input: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Model file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a CSV with a saved model; writes `row_id,probability,label`.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = ",", value_parser = parse_delimiter_arg)]
        delimiter: u8,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[command(flatten)]
        input: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Per-fold CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic datasets with sidecar descriptions.
    Synth {
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic datasets, fit each and compare against the generator.
    Experiment {
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[command(flatten)]
        train: TrainArgs,
        /// Per-dataset CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for per-dataset grids of equation values.
        #[arg(long)]
        grid_dir: Option<PathBuf>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 101)]
        grid_resolution: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    /// Boundary drawn from the search grammar, no noise.
    Within,
    /// Boundary drawn from the search grammar, Gaussian noise on the points.
    WithinNoise,
    /// Boundary containing a cubic or quartic term, with noise.
    BeyondNoise,
    /// Mixture of six Gaussian clusters, two positive.
    Gaussian,
    /// Four Gaussian clusters in an XOR layout.
    Xor,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Within => "within",
            Protocol::WithinNoise => "within-noise",
            Protocol::BeyondNoise => "beyond-noise",
            Protocol::Gaussian => "gaussian",
            Protocol::Xor => "xor",
        }
    }

    /// Whether datasets come with a generating equation.
    pub fn has_generator(self) -> bool {
        matches!(
            self,
            Protocol::Within | Protocol::WithinNoise | Protocol::BeyondNoise
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Labelled CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema file (`key = value` lines); flags below override it.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub target_column: Option<String>,
    #[arg(long)]
    pub positive_label: Option<String>,
    #[arg(long, value_parser = parse_delimiter_arg)]
    pub delimiter: Option<u8>,
    /// Columns to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    /// Columns to drop.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
}

impl DataArgs {
    pub fn schema(&self) -> Result<Schema, CliError> {
        let mut schema = match &self.schema {
            Some(path) => Schema::from_file(path)?,
            None => Schema::new(
                self.target_column.clone().ok_or_else(|| {
                    CliError::Config("--target-column is required without --schema".into())
                })?,
                self.positive_label.clone().ok_or_else(|| {
                    CliError::Config("--positive-label is required without --schema".into())
                })?,
            ),
        };
        if let Some(t) = &self.target_column {
            schema.target_column = t.clone();
        }
        if let Some(p) = &self.positive_label {
            schema.positive_label = p.clone();
        }
        if let Some(d) = self.delimiter {
            schema.delimiter = d;
        }
        schema.categorical.extend(self.categorical.iter().cloned());
        schema.ignore.extend(self.ignore.iter().cloned());
        Ok(schema)
    }
}

fn parse_delimiter_arg(value: &str) -> Result<u8, String> {
    parse_delimiter(value).map_err(|e| e.to_string())
}

/// Search and optimizer knobs; unset flags keep the library defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub sgd_lr: Option<f64>,
    #[arg(long)]
    pub sgd_epochs: Option<usize>,
    #[arg(long)]
    pub sgd_batch: Option<usize>,
    #[arg(long)]
    pub hill_budget: Option<usize>,
    #[arg(long)]
    pub hill_fraction: Option<f64>,
    #[arg(long)]
    pub hill_topk: Option<usize>,
    #[arg(long)]
    pub hill_step: Option<f64>,
    #[arg(long)]
    pub init_range: Option<f64>,
    /// Fit every structure with SGD, including those with exp terms.
    #[arg(long)]
    pub force_sgd: bool,
    /// Threads used to fit candidates of one level.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

impl TrainArgs {
    pub fn settings(&self, seed: u64) -> Result<TrainSettings, CliError> {
        let mut s = TrainSettings::default().with_seed(seed);
        if let Some(v) = self.beam_width {
            s.search.beam_width = v;
        }
        if let Some(v) = self.max_depth {
            s.search.max_depth = v;
        }
        if let Some(v) = self.restarts {
            s.search.restarts_per_candidate = v;
        }
        if let Some(v) = self.sgd_lr {
            s.optimizer.sgd.learning_rate = v;
        }
        if let Some(v) = self.sgd_epochs {
            s.optimizer.sgd.epochs = v;
        }
        if let Some(v) = self.sgd_batch {
            s.optimizer.sgd.batch_size = v;
        }
        if let Some(v) = self.hill_budget {
            s.optimizer.hill.budget = v;
        }
        if let Some(v) = self.hill_fraction {
            s.optimizer.hill.random_fraction = v;
        }
        if let Some(v) = self.hill_topk {
            s.optimizer.hill.top_k = v;
        }
        if let Some(v) = self.hill_step {
            s.optimizer.hill.step_size = v;
        }
        if let Some(v) = self.init_range {
            s.optimizer.init_range = v;
        }
        s.optimizer.force_sgd = self.force_sgd;
        s.search.workers = self.workers;
        validate(&s)?;
        Ok(s)
    }
}

pub fn validate(s: &TrainSettings) -> Result<(), CliError> {
    s.optimizer
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if s.search.beam_width == 0 || s.search.max_depth == 0 || s.search.restarts_per_candidate == 0 {
        return Err(CliError::Config(
            "beam width, max depth and restarts must be positive".into(),
        ));
    }
    Ok(())
}
