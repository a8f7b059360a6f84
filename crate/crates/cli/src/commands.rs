use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use edc_core::data::{
    load_csv, read_table, stratified_kfold, DataError, EncodedDataset, RawTable, Schema,
};
use edc_core::eval::{auc, mean_sd, paired_t_test};
use edc_core::expr::{DisplayExpression, Equation};
use edc_core::model::{train, ModelFile, Prediction, TrainSettings};
use edc_core::search::{beam_search_with_progress, Progress};
use edc_core::synth::{
    gen_beyond_dataset, gen_gaussian_clusters, gen_within_dataset, gen_xor_clusters, ClusterSpec,
    PointSet, SynthConfig,
};
use serde::Serialize;

use crate::args::Protocol;
use crate::error::{write_err, CliError};
use crate::report::{CvReport, DatasetResult, ExperimentReport, FoldResult};

/// Cluster centre offset and spread of the XOR layout.
pub const XOR_OFFSET: f64 = 5.0;
pub const XOR_SCALE: f64 = 1.5;

pub(crate) fn log_progress(label: &str) -> impl FnMut(Progress) + '_ {
    move |p: Progress| {
        log::info!(
            "{label}: depth {} done, {} structures fitted, best loss {:.6}",
            p.depth,
            p.candidates_evaluated,
            p.best_loss
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub model: ModelFile,
    /// Equation over the original feature scale.
    pub equation: String,
}

pub fn cmd_fit(
    data: &Path,
    schema: &Schema,
    settings: &TrainSettings,
    out: Option<&Path>,
) -> Result<FitSummary, CliError> {
    let (table, labels) = load_csv(data, schema)?;
    let rows: Vec<usize> = (0..table.n_rows).collect();
    let model = train(&table, &labels, &rows, settings, log_progress("fit"))?;
    if let Some(path) = out {
        save_model(&model, path)?;
    }
    let equation = model.raw_equation_string(4)?;
    Ok(FitSummary { model, equation })
}

pub fn save_model(model: &ModelFile, path: &Path) -> Result<(), CliError> {
    fs::write(path, model.to_json()).map_err(write_err(path))
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ModelFile::from_json(&text)?)
}

/// Scores every row of `data`. A file without rows yields no predictions.
pub fn cmd_predict(
    model: &ModelFile,
    data: &Path,
    delimiter: u8,
) -> Result<Vec<Prediction>, CliError> {
    if fs::metadata(data).map(|m| m.len() == 0).unwrap_or(false) {
        return Ok(Vec::new());
    }
    let table = read_table(data, delimiter, &categorical_sources(model))?;
    Ok(model.predict_table(&table)?)
}

fn categorical_sources(model: &ModelFile) -> Vec<String> {
    use edc_core::data::ColumnEncoding;
    model
        .encoder
        .columns
        .iter()
        .filter_map(|c| match c {
            ColumnEncoding::Categorical { source, .. } => Some(source.clone()),
            ColumnEncoding::Numeric { .. } => None,
        })
        .collect()
}

pub fn write_predictions<W: Write>(preds: &[Prediction], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(["row_id", "probability", "label"])
        .map_err(internal)?;
    for (i, p) in preds.iter().enumerate() {
        w.write_record([
            i.to_string(),
            p.probability.to_string(),
            u8::from(p.label).to_string(),
        ])
        .map_err(internal)?;
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))
}

/// Stratified k-fold evaluation; every fold fits its own encoder,
/// normalization and threshold on its training rows.
pub fn cmd_cv(
    table: &RawTable,
    labels: &[bool],
    k: usize,
    settings: &TrainSettings,
) -> Result<CvReport, CliError> {
    let positives = labels.iter().filter(|&&y| y).count();
    let minority = positives.min(labels.len() - positives);
    if k < 2 || k > minority {
        return Err(DataError::InfeasibleFolds {
            k,
            reason: format!("need 2 <= k <= minority class size ({minority})"),
        }
        .into());
    }
    let plan = stratified_kfold(labels, k, settings.search.seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let started = Instant::now();
        let train_rows = plan.train_rows(fold);
        let test_rows = plan.test_rows(fold);
        let label = format!("fold {}/{k}", fold + 1);
        let model = train(table, labels, &train_rows, settings, log_progress(&label))?;
        let preds = model.predict_rows(table, &test_rows)?;
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let test_labels: Vec<bool> = test_rows.iter().map(|&r| labels[r]).collect();
        let test_auc = auc(&scores, &test_labels).map_err(|e| CliError::Internal(e.to_string()))?;
        let accuracy = preds
            .iter()
            .zip(&test_labels)
            .filter(|(p, &y)| p.label == y)
            .count() as f64
            / test_rows.len() as f64;
        log::info!("{label}: test AUC {test_auc:.4}");
        folds.push(FoldResult {
            fold,
            train_rows: train_rows.len(),
            test_rows: test_rows.len(),
            train_auc: model.metadata.train_auc,
            test_auc,
            test_accuracy: accuracy,
            equation: model.raw_equation_string(4)?,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(CvReport::new(folds))
}

/// One generated dataset with whatever describes its origin.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub protocol: Protocol,
    pub seed: u64,
    pub points: PointSet,
    pub equation: Option<Equation>,
    pub clusters: Option<Vec<ClusterSpec>>,
}

pub fn generate(protocol: Protocol, seed: u64, n_points: usize) -> Result<SynthDataset, CliError> {
    let cfg = SynthConfig {
        n_points,
        ..SynthConfig::default()
    }
    .with_seed(seed);
    let (points, equation, clusters) = match protocol {
        Protocol::Within => {
            let d = gen_within_dataset(&cfg.noise_free())?;
            (d.noisy, Some(d.equation), None)
        }
        Protocol::WithinNoise => {
            let d = gen_within_dataset(&cfg)?;
            (d.noisy, Some(d.equation), None)
        }
        Protocol::BeyondNoise => {
            let d = gen_beyond_dataset(&cfg)?;
            (d.noisy, Some(d.equation), None)
        }
        Protocol::Gaussian => {
            let d = gen_gaussian_clusters(&cfg);
            (d.data, None, Some(d.clusters))
        }
        Protocol::Xor => {
            let d = gen_xor_clusters(&cfg, XOR_OFFSET, XOR_SCALE);
            (d.data, None, Some(d.clusters))
        }
    };
    Ok(SynthDataset {
        protocol,
        seed,
        points,
        equation,
        clusters,
    })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    protocol: &'a str,
    seed: u64,
    n_points: usize,
    positive_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    equation: Option<&'a Equation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    equation_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clusters: Option<&'a [ClusterSpec]>,
}

/// Writes `count` datasets seeded `seed + i`, each as `<protocol>_<i>.csv`
/// with a `.json` sidecar; returns the CSV paths.
pub fn cmd_synth(
    protocol: Protocol,
    count: usize,
    seed: u64,
    n_points: usize,
    outdir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    fs::create_dir_all(outdir).map_err(write_err(outdir))?;
    let mut written = Vec::with_capacity(count);
    for i in 0..count {
        let ds = generate(protocol, seed.wrapping_add(i as u64), n_points)?;
        let stem = format!("{}_{i:03}", protocol.name());
        let csv_path = outdir.join(format!("{stem}.csv"));
        write_points(&ds.points, &csv_path)?;
        let sidecar = Sidecar {
            protocol: protocol.name(),
            seed: ds.seed,
            n_points: ds.points.len(),
            positive_fraction: ds.points.positive_fraction(),
            equation: ds.equation.as_ref(),
            equation_text: ds
                .equation
                .as_ref()
                .map(|e| e.to_infix_string(&PointSet::feature_names(), 6))
                .transpose()
                .map_err(|e| CliError::Internal(e.to_string()))?,
            clusters: ds.clusters.as_deref(),
        };
        let json_path = outdir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(&json_path, text).map_err(write_err(&json_path))?;
        written.push(csv_path);
    }
    Ok(written)
}

fn write_points(points: &PointSet, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Internal(e.to_string()))?;
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(["x1", "x2", "label"]).map_err(internal)?;
    for (p, &y) in points.points.chunks_exact(2).zip(&points.labels) {
        w.write_record([p[0].to_string(), p[1].to_string(), u8::from(y).to_string()])
            .map_err(internal)?;
    }
    w.flush().map_err(write_err(path))
}

/// Options for [`cmd_experiment`] beyond the training settings.
#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub protocol: Protocol,
    pub count: usize,
    pub seed: u64,
    pub n_points: usize,
    pub grid: Option<(PathBuf, usize)>,
}

/// Fits one model per generated dataset (seeded `seed + i`) and scores it on
/// its own data next to the generating equation. Failures are recorded per
/// dataset and do not stop the run.
pub fn cmd_experiment(
    opts: &ExperimentOptions,
    settings: &TrainSettings,
) -> Result<ExperimentReport, CliError> {
    if let Some((dir, res)) = &opts.grid {
        if *res < 2 {
            return Err(CliError::Config(
                "grid resolution must be at least 2".into(),
            ));
        }
        fs::create_dir_all(dir).map_err(write_err(dir))?;
    }
    let mut rows = Vec::with_capacity(opts.count);
    for i in 0..opts.count {
        let seed = opts.seed.wrapping_add(i as u64);
        let result = run_dataset(opts, settings, i, seed).unwrap_or_else(|e| {
            log::warn!("dataset {i}: {e}");
            DatasetResult::failed(i, seed, e.to_string())
        });
        rows.push(result);
    }
    Ok(ExperimentReport::new(opts.protocol.name(), rows))
}

fn run_dataset(
    opts: &ExperimentOptions,
    settings: &TrainSettings,
    index: usize,
    seed: u64,
) -> Result<DatasetResult, CliError> {
    let started = Instant::now();
    let ds = generate(opts.protocol, seed, opts.n_points)?;
    let data = ds.points.to_dataset();
    let settings = settings.clone().with_seed(seed);
    let label = format!("{} #{index}", opts.protocol.name());
    let best = beam_search_with_progress(
        &data,
        &settings.grammar(data.n_features()),
        &settings.search,
        &settings.optimizer,
        log_progress(&label),
    )
    .map_err(edc_core::model::ModelError::from)?;
    let scores = equation_scores(&best.equation, &data)?;
    let edc_auc = auc(&scores, data.labels()).map_err(|e| CliError::Internal(e.to_string()))?;
    let original_auc = ds
        .equation
        .as_ref()
        .map(|eq| -> Result<f64, CliError> {
            let s: Vec<f64> = ds
                .points
                .points
                .chunks_exact(2)
                .map(|x| eq.evaluate(x))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            auc(&s, &ds.points.labels).map_err(|e| CliError::Internal(e.to_string()))
        })
        .transpose()?;
    let display = denormalized(&best.equation, &data)?;
    let names = PointSet::feature_names();
    if let Some((dir, res)) = &opts.grid {
        let path = dir.join(format!("{}_{index:03}_grid.csv", opts.protocol.name()));
        write_grid(&path, *res, &display, ds.equation.as_ref())?;
    }
    log::info!("{label}: AUC {edc_auc:.4}");
    let internal = |e: edc_core::expr::ExprError| CliError::Internal(e.to_string());
    Ok(DatasetResult {
        index,
        seed,
        edc_auc: Some(edc_auc),
        original_auc,
        train_loss: Some(best.train_loss),
        equation: display.to_infix_string(&names, 4).map_err(internal)?,
        generator: ds
            .equation
            .as_ref()
            .map(|e| e.to_infix_string(&names, 4))
            .transpose()
            .map_err(internal)?,
        seconds: started.elapsed().as_secs_f64(),
        error: None,
    })
}

fn equation_scores(eq: &Equation, data: &EncodedDataset) -> Result<Vec<f64>, CliError> {
    data.rows()
        .map(|x| eq.evaluate(x))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn denormalized(eq: &Equation, data: &EncodedDataset) -> Result<DisplayExpression, CliError> {
    let mins: Vec<f64> = data.norm_params().iter().map(|p| p.min).collect();
    let ranges: Vec<f64> = data.norm_params().iter().map(|p| p.range).collect();
    eq.denormalize(&mins, &ranges)
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// `x1,x2,edc[,original]` over a regular grid spanning the synthetic domain.
fn write_grid(
    path: &Path,
    resolution: usize,
    edc: &DisplayExpression,
    original: Option<&Equation>,
) -> Result<(), CliError> {
    let domain = SynthConfig::default().domain;
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(internal)?;
    let mut header = vec!["x1", "x2", "edc"];
    if original.is_some() {
        header.push("original");
    }
    w.write_record(&header).map_err(internal)?;
    let axis = |d: (f64, f64), i: usize| d.0 + (d.1 - d.0) * i as f64 / (resolution - 1) as f64;
    for i in 0..resolution {
        for j in 0..resolution {
            let x = [axis(domain[0], i), axis(domain[1], j)];
            let expr = |e: edc_core::expr::ExprError| CliError::Internal(e.to_string());
            let mut record = vec![
                x[0].to_string(),
                x[1].to_string(),
                edc.evaluate(&x).map_err(expr)?.to_string(),
            ];
            if let Some(eq) = original {
                record.push(eq.evaluate(&x).map_err(expr)?.to_string());
            }
            w.write_record(&record).map_err(internal)?;
        }
    }
    w.flush().map_err(write_err(path))
}

/// Paired comparison of EDC against the generating equation.
pub fn compare(report: &ExperimentReport) -> Option<edc_core::eval::PairedTTest> {
    let (a, b): (Vec<f64>, Vec<f64>) = report
        .rows
        .iter()
        .filter_map(|r| Some((r.edc_auc?, r.original_auc?)))
        .unzip();
    paired_t_test(&a, &b).ok()
}

pub(crate) fn summary(values: &[f64]) -> Option<(f64, f64)> {
    (!values.is_empty()).then(|| mean_sd(values))
}
