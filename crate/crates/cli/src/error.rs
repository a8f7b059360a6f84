use edc_core::data::DataError;
use edc_core::model::ModelError;
use edc_core::search::SearchError;
use edc_core::synth::SynthError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_UNLEARNABLE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(e) => data_code(e),
            CliError::Model(e) => match e {
                ModelError::Data(d) => data_code(d),
                ModelError::Search(s) => search_code(s),
                ModelError::Format(_) | ModelError::Version { .. } => EXIT_DATA,
                ModelError::Metric(_) | ModelError::Expr(_) => EXIT_INTERNAL,
            },
            CliError::Synth(_) => EXIT_INTERNAL,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Write { .. } => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn data_code(e: &DataError) -> i32 {
    match e {
        DataError::SingleClass => EXIT_UNLEARNABLE,
        DataError::Schema(_) | DataError::InfeasibleFolds { .. } => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

fn search_code(e: &SearchError) -> i32 {
    match e {
        SearchError::Unlearnable => EXIT_UNLEARNABLE,
        SearchError::Empty => EXIT_DATA,
        SearchError::Config(_) => EXIT_CONFIG,
        SearchError::Optimize(edc_core::optimize::OptimizeError::Config(_)) => EXIT_CONFIG,
        SearchError::Optimize(_) => EXIT_INTERNAL,
    }
}

pub(crate) fn write_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.display().to_string(),
        source,
    }
}
