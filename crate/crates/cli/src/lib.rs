//! Command-line front end: fitting, prediction, cross-validation,
//! synthetic data generation and synthetic experiments.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;

use std::fs;
use std::io::{self, Write};

pub use args::{Cli, Command, DataArgs, Protocol, TrainArgs};
pub use commands::{
    cmd_cv, cmd_experiment, cmd_fit, cmd_predict, cmd_synth, generate, load_model, save_model,
    write_predictions, ExperimentOptions, FitSummary, SynthDataset,
};
pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL, EXIT_OK, EXIT_UNLEARNABLE};
pub use report::{CvReport, DatasetResult, ExperimentReport, FoldResult};

use crate::error::write_err;

/// Runs a parsed command, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let out = |stdout: &mut dyn Write, text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Internal(e.to_string()))
    };
    match &cli.command {
        Command::Fit {
            input,
            train,
            out: path,
        } => {
            let settings = train.settings(cli.seed)?;
            let schema = input.schema()?;
            let fit = cmd_fit(&input.data, &schema, &settings, path.as_deref())?;
            let meta = &fit.model.metadata;
            let auc = meta
                .train_auc
                .map_or("-".to_string(), |a| format!("{a:.4}"));
            out(
                stdout,
                &format!(
                    "f(x) = {}\ntrain AUC {auc}, train accuracy {:.4}, train loss {:.6}\n",
                    fit.equation, meta.train_accuracy, meta.train_loss
                ),
            )
        }
        Command::Predict {
            model,
            data,
            delimiter,
            out: path,
        } => {
            let model = load_model(model)?;
            let preds = cmd_predict(&model, data, *delimiter)?;
            match path {
                Some(p) => {
                    let file = fs::File::create(p).map_err(write_err(p))?;
                    write_predictions(&preds, io::BufWriter::new(file))
                }
                None => write_predictions(&preds, stdout),
            }
        }
        Command::Cv {
            input,
            train,
            folds,
            out: path,
        } => {
            let settings = train.settings(cli.seed)?;
            let schema = input.schema()?;
            let (table, labels) = edc_core::data::load_csv(&input.data, &schema)?;
            let report = cmd_cv(&table, &labels, *folds, &settings)?;
            if let Some(p) = path {
                let file = fs::File::create(p).map_err(write_err(p))?;
                report.write_csv(io::BufWriter::new(file))?;
            }
            out(stdout, &report.to_text())
        }
        Command::Synth {
            protocol,
            count,
            points,
            out: dir,
        } => {
            let written = cmd_synth(*protocol, *count, cli.seed, *points, dir)?;
            out(
                stdout,
                &format!("wrote {} dataset(s) to {}\n", written.len(), dir.display()),
            )
        }
        Command::Experiment {
            protocol,
            count,
            points,
            train,
            out: path,
            grid_dir,
            grid_resolution,
        } => {
            let settings = train.settings(cli.seed)?;
            let opts = ExperimentOptions {
                protocol: *protocol,
                count: *count,
                seed: cli.seed,
                n_points: *points,
                grid: grid_dir.clone().map(|d| (d, *grid_resolution)),
            };
            let report = cmd_experiment(&opts, &settings)?;
            if let Some(p) = path {
                let file = fs::File::create(p).map_err(write_err(p))?;
                report.write_csv(io::BufWriter::new(file))?;
            }
            out(stdout, &report.to_text())
        }
    }
}
