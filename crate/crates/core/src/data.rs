//! Tabular ingestion and encoding.
//!
//! Raw CSV columns are typed as numeric when every non-missing cell parses
//! as a number, and as categorical otherwise. Categorical columns are
//! one-hot encoded with rare categories folded into an `OTHER` column, then
//! every feature is min-max scaled to `[0, 1]` using training rows only.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cells treated as missing.
pub const MISSING_MARKERS: [&str; 2] = ["", "?"];
/// Default rare-category frequency; categories at or below it are grouped.
pub const DEFAULT_RARE_THRESHOLD: f64 = 0.02;
/// Category label substituted for missing categorical cells.
pub const MISSING_CATEGORY: &str = "<missing>";
pub const OTHER_CATEGORY: &str = "OTHER";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unparseable CSV: {0}")]
    Unparseable(String),
    #[error("target column '{0}' not found")]
    TargetColumnNotFound(String),
    #[error("no data rows")]
    NoRows,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("column '{0}' not found")]
    ColumnNotFound(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("cannot split into {k} folds: {reason}")]
    InfeasibleFolds { k: usize, reason: String },
    #[error("dataset: {0}")]
    Invalid(String),
}

impl DataError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "io-error",
            DataError::Unparseable(_) => "unparseable-file",
            DataError::TargetColumnNotFound(_) => "target-column-not-found",
            DataError::NoRows => "zero-rows",
            DataError::SingleClass => "single-class-labels",
            DataError::ColumnNotFound(_) => "column-not-found",
            DataError::Schema(_) => "invalid-schema",
            DataError::InfeasibleFolds { .. } => "infeasible-folds",
            DataError::Invalid(_) => "invalid-dataset",
        }
    }
}

/// How to read a labelled CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub target_column: String,
    pub positive_label: String,
    pub delimiter: u8,
    /// Columns forced to categorical even if every value parses as a number.
    pub categorical: Vec<String>,
    /// Columns to drop before encoding.
    pub ignore: Vec<String>,
}

impl Schema {
    pub fn new(target_column: impl Into<String>, positive_label: impl Into<String>) -> Self {
        Self {
            target_column: target_column.into(),
            positive_label: positive_label.into(),
            delimiter: b',',
            categorical: Vec::new(),
            ignore: Vec::new(),
        }
    }

    /// Parses `key = value` lines. Keys: `target_column`, `positive_label`,
    /// `delimiter` (a single character or `tab`), `categorical` and `ignore`
    /// (comma-separated column lists). `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut target = None;
        let mut positive = None;
        let mut schema = Schema::new("", "");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DataError::Schema(format!("line {}: expected key = value", lineno + 1))
            })?;
            let value = value.trim();
            let list = || {
                value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect::<Vec<_>>()
            };
            match key.trim() {
                "target_column" => target = Some(value.to_string()),
                "positive_label" => positive = Some(value.to_string()),
                "delimiter" => schema.delimiter = parse_delimiter(value)?,
                "categorical" => schema.categorical = list(),
                "ignore" => schema.ignore = list(),
                other => return Err(DataError::Schema(format!("unknown key '{other}'"))),
            }
        }
        schema.target_column =
            target.ok_or_else(|| DataError::Schema("missing target_column".into()))?;
        schema.positive_label =
            positive.ok_or_else(|| DataError::Schema("missing positive_label".into()))?;
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

pub fn parse_delimiter(value: &str) -> Result<u8, DataError> {
    match value {
        "tab" | "\\t" => Ok(b'\t'),
        v if v.len() == 1 => Ok(v.as_bytes()[0]),
        v => Err(DataError::Schema(format!("bad delimiter '{v}'"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Column::Numeric(_))
    }
}

/// A rectangular table of typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub n_rows: usize,
}

impl RawTable {
    /// Types raw text cells column by column.
    pub fn from_cells(names: Vec<String>, cells: Vec<Vec<String>>, force_categorical: &[String]) -> Self {
        let n_rows = cells.len();
        let columns = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let col: Vec<&str> = cells.iter().map(|row| row[j].as_str()).collect();
                type_column(&col, force_categorical.contains(name))
            })
            .collect();
        Self {
            names,
            columns,
            n_rows,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    fn remove_column(&mut self, name: &str) -> Option<Column> {
        let i = self.column_index(name)?;
        self.names.remove(i);
        Some(self.columns.remove(i))
    }
}

fn is_missing(cell: &str) -> bool {
    MISSING_MARKERS.contains(&cell.trim())
}

fn type_column(cells: &[&str], force_categorical: bool) -> Column {
    let numeric = !force_categorical
        && cells
            .iter()
            .all(|c| is_missing(c) || c.trim().parse::<f64>().is_ok_and(f64::is_finite));
    if numeric {
        Column::Numeric(
            cells
                .iter()
                .map(|c| if is_missing(c) { None } else { c.trim().parse().ok() })
                .collect(),
        )
    } else {
        Column::Categorical(
            cells
                .iter()
                .map(|c| {
                    if is_missing(c) {
                        None
                    } else {
                        Some(c.trim().to_string())
                    }
                })
                .collect(),
        )
    }
}

fn read_cells(path: &Path, delimiter: u8) -> Result<(Vec<String>, Vec<Vec<String>>), DataError> {
    let text = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_cells_from(&text[..], delimiter)
}

fn read_cells_from<R: std::io::Read>(
    reader: R,
    delimiter: u8,
) -> Result<(Vec<String>, Vec<Vec<String>>), DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Unparseable(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(DataError::Unparseable("missing header row".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Unparseable(e.to_string()))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((headers, rows))
}

/// Reads an unlabelled table (zero rows allowed).
pub fn read_table(
    path: &Path,
    delimiter: u8,
    force_categorical: &[String],
) -> Result<RawTable, DataError> {
    let (names, cells) = read_cells(path, delimiter)?;
    Ok(RawTable::from_cells(names, cells, force_categorical))
}

/// Reads a labelled CSV; the target column is removed from the table and
/// turned into labels (`true` iff the cell equals `positive_label`).
pub fn load_csv(path: &Path, schema: &Schema) -> Result<(RawTable, Vec<bool>), DataError> {
    let (names, cells) = read_cells(path, schema.delimiter)?;
    table_with_labels(names, cells, schema)
}

pub fn load_csv_from_reader<R: std::io::Read>(
    reader: R,
    schema: &Schema,
) -> Result<(RawTable, Vec<bool>), DataError> {
    let (names, cells) = read_cells_from(reader, schema.delimiter)?;
    table_with_labels(names, cells, schema)
}

fn table_with_labels(
    names: Vec<String>,
    cells: Vec<Vec<String>>,
    schema: &Schema,
) -> Result<(RawTable, Vec<bool>), DataError> {
    let target = names
        .iter()
        .position(|n| *n == schema.target_column)
        .ok_or_else(|| DataError::TargetColumnNotFound(schema.target_column.clone()))?;
    if cells.is_empty() {
        return Err(DataError::NoRows);
    }
    let labels: Vec<bool> = cells
        .iter()
        .map(|row| row[target].trim() == schema.positive_label)
        .collect();
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(DataError::SingleClass);
    }
    let mut table = RawTable::from_cells(names, cells, &schema.categorical);
    table.remove_column(&schema.target_column);
    for name in &schema.ignore {
        table.remove_column(name);
    }
    Ok((table, labels))
}

/// Where an encoded column comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnOrigin {
    Numeric { source: String },
    Category { source: String, category: String },
    Other { source: String },
}

impl ColumnOrigin {
    pub fn source(&self) -> &str {
        match self {
            ColumnOrigin::Numeric { source }
            | ColumnOrigin::Category { source, .. }
            | ColumnOrigin::Other { source } => source,
        }
    }

    pub fn feature_name(&self) -> String {
        match self {
            ColumnOrigin::Numeric { source } => source.clone(),
            ColumnOrigin::Category { source, category } => format!("{source}={category}"),
            ColumnOrigin::Other { source } => format!("{source}={OTHER_CATEGORY}"),
        }
    }
}

/// Per-source-column encoding fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Numeric {
        source: String,
        /// Training median, used for missing cells.
        fill: f64,
    },
    Categorical {
        source: String,
        /// Categories with their own column, sorted.
        kept: Vec<String>,
        /// Whether an OTHER column exists.
        other: bool,
    },
}

/// Fitted one-hot/imputation encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<ColumnEncoding>,
    pub rare_threshold: f64,
}

impl Encoder {
    /// Fits on the given rows of `table`.
    pub fn fit(table: &RawTable, rows: &[usize], rare_threshold: f64) -> Self {
        let columns = table
            .names
            .iter()
            .zip(&table.columns)
            .map(|(name, col)| match col {
                Column::Numeric(values) => {
                    let mut present: Vec<f64> = rows.iter().filter_map(|&r| values[r]).collect();
                    ColumnEncoding::Numeric {
                        source: name.clone(),
                        fill: median(&mut present),
                    }
                }
                Column::Categorical(values) => {
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for &r in rows {
                        *counts.entry(category_of(&values[r])).or_default() += 1;
                    }
                    let total = rows.len().max(1) as f64;
                    let mut kept = Vec::new();
                    let mut other = false;
                    for (cat, &count) in &counts {
                        if count as f64 / total > rare_threshold {
                            kept.push(cat.to_string());
                        } else {
                            other = true;
                        }
                    }
                    ColumnEncoding::Categorical {
                        source: name.clone(),
                        kept,
                        other,
                    }
                }
            })
            .collect();
        Self {
            columns,
            rare_threshold,
        }
    }

    pub fn origins(&self) -> Vec<ColumnOrigin> {
        let mut out = Vec::new();
        for enc in &self.columns {
            match enc {
                ColumnEncoding::Numeric { source, .. } => out.push(ColumnOrigin::Numeric {
                    source: source.clone(),
                }),
                ColumnEncoding::Categorical {
                    source,
                    kept,
                    other,
                } => {
                    out.extend(kept.iter().map(|c| ColumnOrigin::Category {
                        source: source.clone(),
                        category: c.clone(),
                    }));
                    if *other {
                        out.push(ColumnOrigin::Other {
                            source: source.clone(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.origins().iter().map(ColumnOrigin::feature_name).collect()
    }

    pub fn n_features(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                ColumnEncoding::Numeric { .. } => 1,
                ColumnEncoding::Categorical { kept, other, .. } => kept.len() + usize::from(*other),
            })
            .sum()
    }

    /// Encodes `rows` of `table` into a row-major matrix. Columns are matched
    /// by name, so the table may carry extra columns. Categories unseen at fit
    /// time go to OTHER when it exists.
    pub fn transform(&self, table: &RawTable, rows: &[usize]) -> Result<Vec<f64>, DataError> {
        let width = self.n_features();
        let mut out = vec![0.0; rows.len() * width];
        let mut offset = 0;
        for enc in &self.columns {
            match enc {
                ColumnEncoding::Numeric { source, fill } => {
                    let col = table
                        .column(source)
                        .ok_or_else(|| DataError::ColumnNotFound(source.clone()))?;
                    for (i, &r) in rows.iter().enumerate() {
                        out[i * width + offset] = match col {
                            Column::Numeric(v) => v[r].unwrap_or(*fill),
                            Column::Categorical(v) => v[r]
                                .as_deref()
                                .and_then(|s| s.parse().ok())
                                .unwrap_or(*fill),
                        };
                    }
                    offset += 1;
                }
                ColumnEncoding::Categorical {
                    source,
                    kept,
                    other,
                } => {
                    let col = table
                        .column(source)
                        .ok_or_else(|| DataError::ColumnNotFound(source.clone()))?;
                    for (i, &r) in rows.iter().enumerate() {
                        let cell = match col {
                            Column::Categorical(v) => category_of(&v[r]).to_string(),
                            Column::Numeric(v) => match v[r] {
                                Some(x) => format_number(x),
                                None => MISSING_CATEGORY.to_string(),
                            },
                        };
                        match kept.binary_search(&cell) {
                            Ok(pos) => out[i * width + offset + pos] = 1.0,
                            Err(_) if *other => out[i * width + offset + kept.len()] = 1.0,
                            Err(_) => {}
                        }
                    }
                    offset += kept.len() + usize::from(*other);
                }
            }
        }
        Ok(out)
    }
}

fn format_number(x: f64) -> String {
    x.to_string()
}

fn category_of(cell: &Option<String>) -> &str {
    cell.as_deref().unwrap_or(MISSING_CATEGORY)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// One-hot encodes the whole table (fit and transform on every row).
pub fn one_hot_encode(table: &RawTable, rare_threshold: f64) -> (Encoder, Vec<f64>) {
    let rows: Vec<usize> = (0..table.n_rows).collect();
    let enc = Encoder::fit(table, &rows, rare_threshold);
    let x = enc
        .transform(table, &rows)
        .expect("encoder fitted on this table");
    (enc, x)
}

/// Min-max scaling parameters for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: f64,
    /// `max - min`; zero marks a degenerate feature.
    pub range: f64,
}

impl NormParams {
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        if self.range > 0.0 {
            (v - self.min) / self.range
        } else {
            0.0
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.range > 0.0)
    }
}

/// Fits per-column min/max on a row-major `n x width` matrix.
pub fn fit_normalization(x: &[f64], width: usize) -> Vec<NormParams> {
    (0..width)
        .map(|j| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for row in x.chunks_exact(width) {
                lo = lo.min(row[j]);
                hi = hi.max(row[j]);
            }
            if lo.is_finite() {
                NormParams {
                    min: lo,
                    range: hi - lo,
                }
            } else {
                NormParams { min: 0.0, range: 0.0 }
            }
        })
        .collect()
}

/// Applies fitted parameters; values outside the training range are left unclipped.
pub fn apply_normalization(x: &[f64], params: &[NormParams]) -> Vec<f64> {
    let width = params.len();
    let mut out = x.to_vec();
    for row in out.chunks_exact_mut(width) {
        for (v, p) in row.iter_mut().zip(params) {
            *v = p.apply(*v);
        }
    }
    out
}

/// Numeric features scaled to `[0, 1]` with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    x: Vec<f64>,
    n_features: usize,
    labels: Vec<bool>,
    feature_names: Vec<String>,
    norm: Vec<NormParams>,
}

impl EncodedDataset {
    /// Normalizes a raw row-major matrix with parameters fitted on it.
    pub fn from_raw(
        raw: Vec<f64>,
        n_features: usize,
        labels: Vec<bool>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let norm = fit_normalization(&raw, n_features);
        Self::with_params(raw, n_features, labels, feature_names, norm)
    }

    /// Normalizes a raw matrix with previously fitted parameters.
    pub fn with_params(
        raw: Vec<f64>,
        n_features: usize,
        labels: Vec<bool>,
        feature_names: Vec<String>,
        norm: Vec<NormParams>,
    ) -> Result<Self, DataError> {
        if n_features == 0 {
            return Err(DataError::Invalid("no features".into()));
        }
        if raw.len() != labels.len() * n_features {
            return Err(DataError::Invalid(format!(
                "{} values for {} rows of {} features",
                raw.len(),
                labels.len(),
                n_features
            )));
        }
        if feature_names.len() != n_features || norm.len() != n_features {
            return Err(DataError::Invalid("feature metadata length mismatch".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite feature value".into()));
        }
        let x = apply_normalization(&raw, &norm);
        Ok(Self {
            x,
            n_features,
            labels,
            feature_names,
            norm,
        })
    }

    /// Wraps an already-normalized matrix. Parameters are the identity.
    pub fn from_normalized(
        x: Vec<f64>,
        n_features: usize,
        labels: Vec<bool>,
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let norm = vec![NormParams { min: 0.0, range: 1.0 }; n_features];
        Self::with_params(x, n_features, labels, feature_names, norm)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_features)
    }

    pub fn matrix(&self) -> &[f64] {
        &self.x
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn norm_params(&self) -> &[NormParams] {
        &self.norm
    }

    pub fn degenerate_features(&self) -> Vec<usize> {
        self.norm
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_degenerate())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub fn has_both_classes(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.len()
    }

    /// Subset of rows, keeping the normalization parameters.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut x = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Self {
            x,
            n_features: self.n_features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_names: self.feature_names.clone(),
            norm: self.norm.clone(),
        }
    }
}

/// Fold assignment for cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index of every row.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Seeded per-class shuffle followed by one round-robin pass over positives
/// then negatives, so fold sizes differ by at most one and per-fold class
/// counts are within one of proportional.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    let n = labels.len();
    if k < 2 || k > n {
        return Err(DataError::InfeasibleFolds {
            k,
            reason: format!("need 2 <= k <= {n} rows"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignments = vec![0; n];
    for (slot, &row) in pos.iter().chain(&neg).enumerate() {
        assignments[row] = slot % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}
