//! Columnar tabular data, train/validation splitting and the score metrics.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_from_seed;

/// Fraction of non-missing entries that must parse as numbers for a column
/// to be inferred numeric.
pub const NUMERIC_INFERENCE_THRESHOLD: f64 = 0.99;

pub const MISSING_MARKERS: [&str; 2] = ["", "NA"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read table: {0}")]
    Io(#[from] std::io::Error),
    #[error("no header")]
    NoHeader,
    #[error("ragged row {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("duplicate header name {0:?}")]
    DuplicateHeader(String),
    #[error("malformed delimited text: {0}")]
    Csv(String),
    #[error("target column {0:?} not found")]
    MissingTarget(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("column length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("too few rows to split: {0} (need at least 5)")]
    TooFewRows(usize),
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("undefined AUROC: labels contain a single class")]
    UndefinedAuroc,
    #[error("zero variance targets")]
    ZeroVariance,
    #[error("invalid metric input: {0}")]
    MetricInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl std::fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnKind::Numeric => f.write_str("numeric"),
            ColumnKind::Categorical => f.write_str("categorical"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take_rows(&self, rows: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical(v) => {
                ColumnData::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn from_f64(name: impl Into<String>, values: &[f64]) -> Self {
        Self::numeric(name, values.iter().map(|v| Some(*v)).collect())
    }

    pub fn categorical(name: impl Into<String>, values: Vec<Option<String>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical(values),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_numeric(&self) -> Option<&[Option<f64>]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[Option<String>]> {
        match &self.data {
            ColumnData::Categorical(v) => Some(v),
            ColumnData::Numeric(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// (name, kind) pairs describing the feature columns of a dataset.
pub type Schema = Vec<(String, ColumnKind)>;

/// Immutable columnar table. Columns are shared behind `Arc`, so appending
/// copies only the column list.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    columns: Vec<Arc<Column>>,
    target: String,
    task: Task,
    metadata: String,
}

impl TabularDataset {
    pub fn new(
        columns: Vec<Column>,
        target: impl Into<String>,
        task: Task,
        metadata: impl Into<String>,
    ) -> Result<Self, DatasetError> {
        let target = target.into();
        let n = columns.first().map(Column::len).unwrap_or(0);
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n {
                return Err(DatasetError::LengthMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
            if !seen.insert(c.name.clone()) {
                return Err(DatasetError::DuplicateHeader(c.name.clone()));
            }
        }
        let target_col = columns
            .iter()
            .find(|c| c.name == target)
            .ok_or_else(|| DatasetError::MissingTarget(target.clone()))?;
        validate_target(target_col, task)?;
        Ok(Self {
            columns: columns.into_iter().map(Arc::new).collect(),
            target,
            task,
            metadata: metadata.into(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(|c| c.len()).unwrap_or(0)
    }

    pub fn columns(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().map(|c| c.as_ref())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns().map(|c| c.name.clone()).collect()
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn metadata(&self) -> &str {
        &self.metadata
    }

    pub fn target_column(&self) -> &Column {
        self.column(&self.target)
            .expect("target validated at construction")
    }

    /// Target values as reals (labels for classification).
    pub fn target_values(&self) -> Vec<f64> {
        self.target_column()
            .as_numeric()
            .expect("target validated numeric")
            .iter()
            .map(|v| v.expect("target validated non-missing"))
            .collect()
    }

    /// Feature columns (everything except the target).
    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns().filter(move |c| c.name != self.target)
    }

    pub fn feature_schema(&self) -> Schema {
        self.feature_columns()
            .map(|c| (c.name.clone(), c.kind()))
            .collect()
    }

    /// Name a new column would receive: `name`, or `name_2`, `name_3`, ...
    pub fn resolve_column_name(&self, name: &str) -> String {
        if self.column(name).is_none() {
            return name.to_string();
        }
        (2..)
            .map(|k| format!("{name}_{k}"))
            .find(|candidate| self.column(candidate).is_none())
            .expect("unbounded suffix search")
    }

    /// Returns a copy with one more numeric column; `self` is untouched.
    pub fn append_column(&self, name: &str, values: &[f64]) -> Result<Self, DatasetError> {
        self.append(Column::from_f64(self.resolve_column_name(name), values))
    }

    pub fn append(&self, mut column: Column) -> Result<Self, DatasetError> {
        if column.len() != self.n_rows() {
            return Err(DatasetError::LengthMismatch {
                expected: self.n_rows(),
                got: column.len(),
            });
        }
        column.name = self.resolve_column_name(&column.name);
        let mut columns = self.columns.clone();
        columns.push(Arc::new(column));
        Ok(Self {
            columns,
            target: self.target.clone(),
            task: self.task,
            metadata: self.metadata.clone(),
        })
    }

    pub fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|c| {
                    Arc::new(Column {
                        name: c.name.clone(),
                        data: c.data.take_rows(rows),
                    })
                })
                .collect(),
            target: self.target.clone(),
            task: self.task,
            metadata: self.metadata.clone(),
        }
    }

    /// Serializes back to the comma-delimited format `load_table` reads.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns().map(|c| c.name.as_str()))
            .map_err(|e| DatasetError::Csv(e.to_string()))?;
        for row in 0..self.n_rows() {
            let record: Vec<String> = self
                .columns()
                .map(|c| match &c.data {
                    ColumnData::Numeric(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
                    ColumnData::Categorical(v) => v[row].clone().unwrap_or_default(),
                })
                .collect();
            w.write_record(&record)
                .map_err(|e| DatasetError::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_target(column: &Column, task: Task) -> Result<(), DatasetError> {
    let values = column.as_numeric().ok_or_else(|| {
        DatasetError::InvalidTarget(format!("target {:?} is not numeric", column.name))
    })?;
    for (i, v) in values.iter().enumerate() {
        let v =
            v.ok_or_else(|| DatasetError::InvalidTarget(format!("missing label at row {i}")))?;
        match task {
            Task::Classification if v < 0.0 || v.fract() != 0.0 || !v.is_finite() => {
                return Err(DatasetError::InvalidTarget(format!(
                    "classification label {v} at row {i} is not a non-negative integer"
                )))
            }
            Task::Regression if !v.is_finite() => {
                return Err(DatasetError::InvalidTarget(format!(
                    "non-finite regression target at row {i}"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Optional hints for `load_table`. Without a target the last column is used;
/// without a task, a numeric target with at most 20 distinct non-negative
/// integer values is treated as classification.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SchemaHint {
    pub target: Option<String>,
    pub task: Option<Task>,
    #[serde(default)]
    pub metadata: String,
}

fn is_missing(field: &str) -> bool {
    MISSING_MARKERS.contains(&field)
}

pub fn load_table(path: &Path, hint: Option<&SchemaHint>) -> Result<TabularDataset, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    parse_table(&text, hint)
}

pub fn parse_table(text: &str, hint: Option<&SchemaHint>) -> Result<TabularDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| DatasetError::Csv(e.to_string()))?,
        None => return Err(DatasetError::NoHeader),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DatasetError::NoHeader);
    }
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.clone()) {
            return Err(DatasetError::DuplicateHeader(n.clone()));
        }
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for record in records {
        let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
        if record.len() == 1 && record.get(0) == Some("") && names.len() > 1 {
            continue; // blank line
        }
        if record.len() != names.len() {
            return Err(DatasetError::RaggedRow {
                line: record.position().map(|p| p.line()).unwrap_or(0),
                expected: names.len(),
                found: record.len(),
            });
        }
        for (col, field) in raw.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
    }

    let columns: Vec<Column> = names
        .iter()
        .zip(raw)
        .map(|(name, fields)| infer_column(name, fields))
        .collect();

    let default_hint = SchemaHint::default();
    let hint = hint.unwrap_or(&default_hint);
    let target = hint
        .target
        .clone()
        .unwrap_or_else(|| names.last().cloned().unwrap_or_default());
    let target_col = columns
        .iter()
        .find(|c| c.name == target)
        .ok_or_else(|| DatasetError::MissingTarget(target.clone()))?;
    let task = hint.task.unwrap_or_else(|| infer_task(target_col));
    TabularDataset::new(columns, target, task, hint.metadata.clone())
}

fn infer_column(name: &str, fields: Vec<String>) -> Column {
    let present: Vec<&String> = fields.iter().filter(|f| !is_missing(f)).collect();
    let parsed = present
        .iter()
        .filter(|f| f.trim().parse::<f64>().is_ok())
        .count();
    let numeric =
        present.is_empty() || parsed as f64 >= NUMERIC_INFERENCE_THRESHOLD * present.len() as f64;
    if numeric {
        Column::numeric(
            name,
            fields
                .iter()
                .map(|f| {
                    if is_missing(f) {
                        None
                    } else {
                        f.trim().parse::<f64>().ok()
                    }
                })
                .collect(),
        )
    } else {
        Column::categorical(
            name,
            fields
                .into_iter()
                .map(|f| if is_missing(&f) { None } else { Some(f) })
                .collect(),
        )
    }
}

fn infer_task(target: &Column) -> Task {
    match target.as_numeric() {
        Some(values) => {
            let mut distinct = HashSet::new();
            let all_int = values.iter().flatten().all(|v| {
                distinct.insert(v.to_bits());
                *v >= 0.0 && v.fract() == 0.0
            });
            if all_int && distinct.len() <= 20 {
                Task::Classification
            } else {
                Task::Regression
            }
        }
        None => Task::Classification,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: TabularDataset,
    pub val: TabularDataset,
    pub seed: u64,
}

impl SplitPair {
    /// Appends the same-named column to both sides.
    pub fn append_column(
        &self,
        name: &str,
        train_values: &[f64],
        val_values: &[f64],
    ) -> Result<SplitPair, DatasetError> {
        let resolved = self.train.resolve_column_name(name);
        Ok(SplitPair {
            train: self
                .train
                .append(Column::from_f64(resolved.clone(), train_values))?,
            val: self.val.append(Column::from_f64(resolved, val_values))?,
            seed: self.seed,
        })
    }
}

/// Deterministic train/validation split. Classification targets are
/// stratified when every class has at least two rows.
pub fn split(dataset: &TabularDataset, ratio: f64, seed: u64) -> Result<SplitPair, DatasetError> {
    let n = dataset.n_rows();
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    if n < 5 {
        return Err(DatasetError::TooFewRows(n));
    }
    let mut rng = rng_from_seed(seed);
    let n_train_total = ((ratio * n as f64).round() as usize).clamp(1, n - 1);

    let mut strata: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    if dataset.task() == Task::Classification {
        for (i, y) in dataset.target_values().iter().enumerate() {
            strata.entry(*y as u64).or_default().push(i);
        }
    }
    let stratify = !strata.is_empty() && strata.values().all(|rows| rows.len() >= 2);

    let mut train_rows = Vec::with_capacity(n_train_total);
    let mut val_rows = Vec::with_capacity(n - n_train_total);
    if stratify {
        // Largest-remainder allocation keeps the overall count at n_train_total.
        let groups: Vec<Vec<usize>> = strata.into_values().collect();
        let quotas: Vec<f64> = groups
            .iter()
            .map(|g| g.len() as f64 * n_train_total as f64 / n as f64)
            .collect();
        let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = n_train_total - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - quotas[a].floor();
            let fb = quotas[b] - quotas[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &g in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            if alloc[g] < groups[g].len() {
                alloc[g] += 1;
                remaining -= 1;
            }
        }
        for (mut rows, take) in groups.into_iter().zip(alloc) {
            rows.shuffle(&mut rng);
            train_rows.extend_from_slice(&rows[..take]);
            val_rows.extend_from_slice(&rows[take..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        train_rows.extend_from_slice(&rows[..n_train_total]);
        val_rows.extend_from_slice(&rows[n_train_total..]);
    }
    train_rows.sort_unstable();
    val_rows.sort_unstable();
    Ok(SplitPair {
        train: dataset.take_rows(&train_rows),
        val: dataset.take_rows(&val_rows),
        seed,
    })
}

/// Area under the ROC curve by the rank-sum method with mid-ranks for ties.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, DatasetError> {
    if scores.len() != labels.len() {
        return Err(DatasetError::MetricInput(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(DatasetError::MetricInput("labels must be 0 or 1".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DatasetError::UndefinedAuroc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of positive ranks, doubled so mid-ranks stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, mid-rank (i+j+2)/2
        let twice_mid = (i + j + 2) as u128;
        let pos_in_block = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_mid * pos_in_block;
        i = j + 1;
    }
    let n_pos_u = n_pos as u128;
    let twice_u = twice_rank_sum - n_pos_u * (n_pos_u + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// RMSE divided by the population standard deviation of the targets.
pub fn nrmse(predictions: &[f64], targets: &[f64]) -> Result<f64, DatasetError> {
    if predictions.len() != targets.len() || targets.len() < 2 {
        return Err(DatasetError::MetricInput(format!(
            "need equal lengths >= 2, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(DatasetError::ZeroVariance);
    }
    let mse = mse(predictions, targets);
    Ok(mse.sqrt() / var.sqrt())
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> f64 {
    predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / targets.len().max(1) as f64
}
