//! Cross-validation and experiment reports: aligned text for people, CSV for
//! scripts.

use std::fmt::Write as _;
use std::io::Write;

use edc_core::eval::PairedTTest;

use crate::commands::{compare, summary};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_auc: Option<f64>,
    pub test_auc: f64,
    pub test_accuracy: f64,
    pub equation: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_auc: f64,
    /// Sample standard deviation across folds.
    pub sd_auc: f64,
    pub seconds: f64,
}

impl CvReport {
    pub fn new(folds: Vec<FoldResult>) -> Self {
        let aucs: Vec<f64> = folds.iter().map(|f| f.test_auc).collect();
        let (mean_auc, sd_auc) = summary(&aucs).unwrap_or((f64::NAN, f64::NAN));
        let seconds = folds.iter().map(|f| f.seconds).sum();
        Self {
            folds,
            mean_auc,
            sd_auc,
            seconds,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>4}  {:>6}  {:>5}  {:>9}  {:>8}  {:>7}  equation",
            "fold", "train", "test", "train AUC", "test AUC", "seconds"
        );
        for f in &self.folds {
            let train_auc = f.train_auc.map_or("-".to_string(), |a| format!("{a:.4}"));
            let _ = writeln!(
                s,
                "{:>4}  {:>6}  {:>5}  {:>9}  {:>8.4}  {:>7.1}  {}",
                f.fold + 1,
                f.train_rows,
                f.test_rows,
                train_auc,
                f.test_auc,
                f.seconds,
                f.equation
            );
        }
        let _ = writeln!(
            s,
            "mean test AUC {} over {} folds, {:.1}s",
            mean_sd_text(self.mean_auc, self.sd_auc),
            self.folds.len(),
            self.seconds
        );
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let e = |e: csv::Error| CliError::Internal(e.to_string());
        w.write_record([
            "fold",
            "train_rows",
            "test_rows",
            "train_auc",
            "test_auc",
            "test_accuracy",
            "seconds",
            "equation",
        ])
        .map_err(e)?;
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                f.train_rows.to_string(),
                f.test_rows.to_string(),
                f.train_auc.map_or(String::new(), |a| a.to_string()),
                f.test_auc.to_string(),
                f.test_accuracy.to_string(),
                format!("{:.3}", f.seconds),
                f.equation.clone(),
            ])
            .map_err(e)?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetResult {
    pub index: usize,
    pub seed: u64,
    pub edc_auc: Option<f64>,
    /// AUC of the generating equation on the same points.
    pub original_auc: Option<f64>,
    pub train_loss: Option<f64>,
    pub equation: String,
    pub generator: Option<String>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl DatasetResult {
    pub fn failed(index: usize, seed: u64, error: String) -> Self {
        Self {
            index,
            seed,
            edc_auc: None,
            original_auc: None,
            train_loss: None,
            equation: String::new(),
            generator: None,
            seconds: 0.0,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub protocol: String,
    pub rows: Vec<DatasetResult>,
    pub edc: Option<(f64, f64)>,
    pub original: Option<(f64, f64)>,
    pub comparison: Option<PairedTTest>,
    pub failures: usize,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn new(protocol: &str, rows: Vec<DatasetResult>) -> Self {
        let edc: Vec<f64> = rows.iter().filter_map(|r| r.edc_auc).collect();
        let original: Vec<f64> = rows.iter().filter_map(|r| r.original_auc).collect();
        let mut report = Self {
            protocol: protocol.to_string(),
            edc: summary(&edc),
            original: summary(&original),
            comparison: None,
            failures: rows.iter().filter(|r| r.error.is_some()).count(),
            seconds: rows.iter().map(|r| r.seconds).sum(),
            rows,
        };
        report.comparison = compare(&report);
        report
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cell = |v: Option<(f64, f64)>| v.map_or("-".to_string(), |(m, sd)| mean_sd_text(m, sd));
        let _ = writeln!(
            s,
            "{:<14}  {:>8}  {:<16}  {:<16}",
            "protocol", "datasets", "EDC AUC", "Original DB AUC"
        );
        let _ = writeln!(
            s,
            "{:<14}  {:>8}  {:<16}  {:<16}",
            self.protocol,
            self.rows.len() - self.failures,
            cell(self.edc),
            cell(self.original)
        );
        if let Some(t) = &self.comparison {
            let _ = writeln!(
                s,
                "paired t-test EDC vs original: t({}) = {:.3}, mean difference {:.4}, one-sided p = {:.3e}, two-sided p = {:.3e}",
                t.df,
                t.t,
                t.mean_difference,
                t.p_greater(),
                t.p_two_sided
            );
        }
        if self.failures > 0 {
            let _ = writeln!(s, "{} dataset(s) failed", self.failures);
            for r in self.rows.iter().filter(|r| r.error.is_some()) {
                let _ = writeln!(
                    s,
                    "  #{} (seed {}): {}",
                    r.index,
                    r.seed,
                    r.error.as_deref().unwrap_or("")
                );
            }
        }
        let _ = writeln!(s, "total {:.1}s", self.seconds);
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let e = |e: csv::Error| CliError::Internal(e.to_string());
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        w.write_record([
            "index",
            "seed",
            "edc_auc",
            "original_auc",
            "train_loss",
            "seconds",
            "equation",
            "generator",
            "error",
        ])
        .map_err(e)?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                opt(r.edc_auc),
                opt(r.original_auc),
                opt(r.train_loss),
                format!("{:.3}", r.seconds),
                r.equation.clone(),
                r.generator.clone().unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(e)?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))
    }
}

fn mean_sd_text(mean: f64, sd: f64) -> String {
    format!("{mean:.3} (±{sd:.3})")
}
