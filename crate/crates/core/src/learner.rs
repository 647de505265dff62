//! Downstream tabular learners and the utility of a candidate column.
//!
//! A candidate's utility is the change in validation score it causes:
//! `g = J(train ⊕ e, val ⊕ e) − J_baseline`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    auroc, mse, nrmse, ColumnData, DatasetError, SplitPair, TabularDataset, Task,
};
use crate::dsl::{evaluate, DslError, EvalDiagnostics, FeatureOperation};
use crate::util::{median, rng_from_seed, sigmoid};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error("column {0:?} missing from evaluation data")]
    MissingColumn(String),
    #[error(transparent)]
    Metric(#[from] DatasetError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error("non-finite score")]
    NonFiniteScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionMetric {
    #[default]
    NegNrmse,
    NegMse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub hidden_width: usize,
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub regression_metric: RegressionMetric,
    pub seed: u64,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Mlp,
            hidden_width: 32,
            l2: 1e-4,
            epochs: 30,
            learning_rate: 1e-2,
            batch_size: 64,
            regression_metric: RegressionMetric::NegNrmse,
            seed: 0,
        }
    }
}

impl LearnerSpec {
    pub fn linear() -> Self {
        Self {
            kind: LearnerKind::Linear,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.hidden_width == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(LearnerError::Config(
                "hidden_width, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.l2 > 0.0) || !(self.learning_rate > 0.0) {
            return Err(LearnerError::Config(
                "l2 and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FeatureTransform {
    Numeric {
        name: String,
        median: f64,
        mean: f64,
        scale: f64,
    },
    Categorical {
        name: String,
        categories: Vec<String>,
    },
}

/// Train-split statistics turning a dataset into a numeric design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    features: Vec<FeatureTransform>,
}

/// Row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl DesignMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

impl Preprocessor {
    /// Numeric columns: z-score with the observed train mean and population
    /// std (zero variance scales by 1), missing values imputed with the train
    /// median (0 when nothing is observed). Categorical columns: one-hot over
    /// sorted train categories.
    pub fn fit(train: &TabularDataset) -> Self {
        let features = train
            .feature_columns()
            .map(|c| match &c.data {
                ColumnData::Numeric(values) => {
                    let observed: Vec<f64> = values.iter().flatten().copied().collect();
                    let mean = crate::util::mean(&observed);
                    let std = crate::util::population_std(&observed);
                    FeatureTransform::Numeric {
                        name: c.name.clone(),
                        median: median(&observed),
                        mean,
                        scale: if std > 0.0 { std } else { 1.0 },
                    }
                }
                ColumnData::Categorical(values) => {
                    let mut categories: Vec<String> = values.iter().flatten().cloned().collect();
                    categories.sort();
                    categories.dedup();
                    FeatureTransform::Categorical {
                        name: c.name.clone(),
                        categories,
                    }
                }
            })
            .collect();
        Self { features }
    }

    pub fn n_outputs(&self) -> usize {
        self.features
            .iter()
            .map(|f| match f {
                FeatureTransform::Numeric { .. } => 1,
                FeatureTransform::Categorical { categories, .. } => categories.len(),
            })
            .sum()
    }

    pub fn transform(&self, ds: &TabularDataset) -> Result<DesignMatrix, LearnerError> {
        let n = ds.n_rows();
        let p = self.n_outputs();
        let mut values = vec![0.0; n * p];
        let mut offset = 0;
        for f in &self.features {
            match f {
                FeatureTransform::Numeric {
                    name,
                    median,
                    mean,
                    scale,
                } => {
                    let col = ds
                        .column(name)
                        .and_then(|c| c.as_numeric())
                        .ok_or_else(|| LearnerError::MissingColumn(name.clone()))?;
                    for (i, v) in col.iter().enumerate() {
                        values[i * p + offset] = (v.unwrap_or(*median) - mean) / scale;
                    }
                    offset += 1;
                }
                FeatureTransform::Categorical { name, categories } => {
                    let col = ds
                        .column(name)
                        .and_then(|c| c.as_categorical())
                        .ok_or_else(|| LearnerError::MissingColumn(name.clone()))?;
                    for (i, v) in col.iter().enumerate() {
                        if let Some(k) = v.as_ref().and_then(|v| categories.binary_search(v).ok()) {
                            values[i * p + offset + k] = 1.0;
                        }
                    }
                    offset += categories.len();
                }
            }
        }
        Ok(DesignMatrix {
            n_rows: n,
            n_cols: p,
            values,
        })
    }
}

/// Preprocessed (design matrix, target) for a dataset.
pub fn preprocess(
    preprocessor: &Preprocessor,
    ds: &TabularDataset,
) -> Result<(DesignMatrix, Vec<f64>), LearnerError> {
    Ok((preprocessor.transform(ds)?, ds.target_values()))
}

#[derive(Debug, Clone)]
enum Head {
    /// One weight vector (bias last) per output.
    Linear(Vec<Vec<f64>>),
    Mlp(Mlp),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Objective {
    /// One logistic output per listed class (two classes: a single output).
    Logistic,
    Softmax,
    Squared,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    preprocessor: Preprocessor,
    task: Task,
    classes: Vec<f64>,
    objective: Objective,
    head: Head,
    target_shift: f64,
    target_scale: f64,
    regression_metric: RegressionMetric,
}

fn class_index(classes: &[f64], y: f64) -> Option<usize> {
    classes.iter().position(|&c| c == y)
}

pub fn train(
    spec: &LearnerSpec,
    train_ds: &TabularDataset,
    seed: u64,
) -> Result<TrainedModel, LearnerError> {
    spec.validate()?;
    let preprocessor = Preprocessor::fit(train_ds);
    let (x, y) = preprocess(&preprocessor, train_ds)?;
    let task = train_ds.task();
    let mut classes = Vec::new();
    let (mut shift, mut scale) = (0.0, 1.0);
    // Per-output targets, row-major n × outputs.
    let (objective, outputs, targets) = match task {
        Task::Classification => {
            classes = y.clone();
            classes.sort_by(f64::total_cmp);
            classes.dedup();
            if classes.len() < 2 {
                return Err(LearnerError::SingleClass);
            }
            if classes.len() == 2 {
                let t = y
                    .iter()
                    .map(|&v| if v == classes[1] { 1.0 } else { 0.0 })
                    .collect();
                (Objective::Logistic, 1, t)
            } else {
                let k = classes.len();
                let mut t = vec![0.0; y.len() * k];
                for (i, &v) in y.iter().enumerate() {
                    t[i * k + class_index(&classes, v).expect("train class")] = 1.0;
                }
                let objective = match spec.kind {
                    LearnerKind::Linear => Objective::Logistic,
                    LearnerKind::Mlp => Objective::Softmax,
                };
                (objective, k, t)
            }
        }
        Task::Regression => {
            shift = crate::util::mean(&y);
            let std = crate::util::population_std(&y);
            scale = if std > 0.0 { std } else { 1.0 };
            (
                Objective::Squared,
                1,
                y.iter().map(|v| (v - shift) / scale).collect(),
            )
        }
    };
    let head = match spec.kind {
        LearnerKind::Linear => Head::Linear(
            (0..outputs)
                .map(|k| {
                    let t: Vec<f64> = (0..x.n_rows).map(|i| targets[i * outputs + k]).collect();
                    match objective {
                        Objective::Squared => fit_ridge(&x, &t, spec.l2),
                        _ => fit_logistic(&x, &t, spec.l2),
                    }
                })
                .collect(),
        ),
        LearnerKind::Mlp => Head::Mlp(Mlp::fit(&x, &targets, outputs, objective, spec, seed)),
    };
    Ok(TrainedModel {
        preprocessor,
        task,
        classes,
        objective,
        head,
        target_shift: shift,
        target_scale: scale,
        regression_metric: spec.regression_metric,
    })
}

impl TrainedModel {
    /// Per-row outputs: class scores (one per class, or a single positive
    /// class probability for two classes) or regression predictions.
    pub fn predict(&self, ds: &TabularDataset) -> Result<Vec<Vec<f64>>, LearnerError> {
        let x = self.preprocessor.transform(ds)?;
        let rows = (0..x.n_rows).map(|i| {
            let r = x.row(i);
            match &self.head {
                Head::Linear(ws) => ws
                    .iter()
                    .map(|w| {
                        let z = linear_output(w, r);
                        if self.objective == Objective::Squared {
                            z
                        } else {
                            sigmoid(z)
                        }
                    })
                    .collect::<Vec<_>>(),
                Head::Mlp(net) => net.predict(r, self.objective),
            }
        });
        Ok(match self.task {
            Task::Classification => rows.collect(),
            Task::Regression => rows
                .map(|r| vec![self.target_shift + self.target_scale * r[0]])
                .collect(),
        })
    }

    /// AUROC for classification (macro one-vs-rest over classes present in
    /// both train and validation), negative NRMSE or MSE for regression.
    pub fn score(&self, val: &TabularDataset) -> Result<f64, LearnerError> {
        let out = self.predict(val)?;
        let y = val.target_values();
        let s = match self.task {
            Task::Classification if self.classes.len() == 2 => {
                let labels: Vec<u8> = y.iter().map(|&v| (v == self.classes[1]) as u8).collect();
                let scores: Vec<f64> = out.iter().map(|r| r[0]).collect();
                auroc(&scores, &labels)?
            }
            Task::Classification => {
                let mut total = 0.0;
                let mut count = 0;
                for (k, &c) in self.classes.iter().enumerate() {
                    let labels: Vec<u8> = y.iter().map(|&v| (v == c) as u8).collect();
                    let scores: Vec<f64> = out.iter().map(|r| r[k]).collect();
                    match auroc(&scores, &labels) {
                        Ok(a) => {
                            total += a;
                            count += 1;
                        }
                        Err(DatasetError::UndefinedAuroc) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                if count == 0 {
                    return Err(DatasetError::UndefinedAuroc.into());
                }
                total / count as f64
            }
            Task::Regression => {
                let pred: Vec<f64> = out.iter().map(|r| r[0]).collect();
                match self.regression_metric {
                    RegressionMetric::NegNrmse => -nrmse(&pred, &y)?,
                    RegressionMetric::NegMse => -mse(&pred, &y),
                }
            }
        };
        if s.is_finite() {
            Ok(s)
        } else {
            Err(LearnerError::NonFiniteScore)
        }
    }
}

pub fn score(model: &TrainedModel, val: &TabularDataset) -> Result<f64, LearnerError> {
    model.score(val)
}

/// Validation score of the learner trained on the split as-is.
pub fn baseline_score(
    split: &SplitPair,
    spec: &LearnerSpec,
    seed: u64,
) -> Result<f64, LearnerError> {
    train(spec, &split.train, seed)?.score(&split.val)
}

fn linear_output(w: &[f64], x: &[f64]) -> f64 {
    let p = x.len();
    w[p] + w[..p].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Ridge regression with an unpenalized intercept:
/// minimizes `mean((y − Xw − b)²) + l2‖w‖²`.
fn fit_ridge(x: &DesignMatrix, y: &[f64], l2: f64) -> Vec<f64> {
    let (n, p) = (x.n_rows, x.n_cols);
    let nf = n as f64;
    let col_mean: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| x.values[i * p + j]).sum::<f64>() / nf)
        .collect();
    let y_mean = y.iter().sum::<f64>() / nf;
    let xc = DMatrix::from_fn(n, p, |i, j| x.values[i * p + j] - col_mean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let mut gram = xc.transpose() * &xc / nf;
    for j in 0..p {
        gram[(j, j)] += l2;
    }
    let rhs = xc.transpose() * yc / nf;
    let w = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(p));
    let bias = y_mean - w.iter().zip(&col_mean).map(|(a, b)| a * b).sum::<f64>();
    w.iter().copied().chain(std::iter::once(bias)).collect()
}

fn logistic_objective(x: &DesignMatrix, t: &[f64], w: &[f64], l2: f64) -> f64 {
    let p = x.n_cols;
    let mut loss = 0.0;
    for i in 0..x.n_rows {
        let z = linear_output(w, x.row(i));
        // log(1 + e^z) − t z, computed stably
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t[i] * z;
    }
    loss / x.n_rows as f64 + 0.5 * l2 * w[..p].iter().map(|v| v * v).sum::<f64>()
}

/// L2-regularized logistic regression by damped Newton iterations from zero.
fn fit_logistic(x: &DesignMatrix, t: &[f64], l2: f64) -> Vec<f64> {
    let (n, p) = (x.n_rows, x.n_cols);
    let nf = n as f64;
    let mut w = vec![0.0; p + 1];
    let mut current = logistic_objective(x, t, &w, l2);
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(p + 1);
        let mut hess = DMatrix::<f64>::zeros(p + 1, p + 1);
        let mut row = vec![1.0; p + 1];
        for i in 0..n {
            row[..p].copy_from_slice(x.row(i));
            let prob = sigmoid(linear_output(&w, x.row(i)));
            let r = prob - t[i];
            let s = prob * (1.0 - prob);
            for a in 0..=p {
                grad[a] += r * row[a] / nf;
                let sa = s * row[a] / nf;
                if sa != 0.0 {
                    for b in a..=p {
                        hess[(a, b)] += sa * row[b];
                    }
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for a in 0..p {
            grad[a] += l2 * w[a];
            hess[(a, a)] += l2;
        }
        hess[(p, p)] += 1e-10;
        if grad.amax() < 1e-10 {
            break;
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&grad);
        let mut alpha = 1.0;
        let mut improved = false;
        while alpha > 1e-8 {
            let trial: Vec<f64> = w
                .iter()
                .zip(step.iter())
                .map(|(a, d)| a - alpha * d)
                .collect();
            let value = logistic_objective(x, t, &trial, l2);
            if value <= current {
                let gain = current - value;
                w = trial;
                current = value;
                improved = gain > 1e-15 * current.abs().max(1.0);
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    w
}

/// One hidden-layer rectifier network trained with Adam on minibatches.
#[derive(Debug, Clone)]
struct Mlp {
    input: usize,
    hidden: usize,
    outputs: usize,
    /// W1[hidden][input], b1[hidden], W2[outputs][hidden], b2[outputs]
    params: Vec<f64>,
}

impl Mlp {
    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.outputs * self.hidden;
        (b1, w2, b2)
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let (d, h) = (self.input, self.hidden);
        for k in 0..h {
            let row = &self.params[k * d..(k + 1) * d];
            let pre = self.params[b1 + k] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            hidden[k] = pre.max(0.0);
        }
        for o in 0..self.outputs {
            let row = &self.params[w2 + o * h..w2 + (o + 1) * h];
            out[o] = self.params[b2 + o]
                + row
                    .iter()
                    .zip(hidden.iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
    }

    fn predict(&self, x: &[f64], objective: Objective) -> Vec<f64> {
        let mut hidden = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.outputs];
        self.forward(x, &mut hidden, &mut out);
        match objective {
            Objective::Squared => out,
            Objective::Logistic => out.into_iter().map(sigmoid).collect(),
            Objective::Softmax => softmax(&out),
        }
    }

    fn fit(
        x: &DesignMatrix,
        targets: &[f64],
        outputs: usize,
        objective: Objective,
        spec: &LearnerSpec,
        seed: u64,
    ) -> Self {
        let (d, h) = (x.n_cols, spec.hidden_width);
        let mut rng = rng_from_seed(seed);
        let mut net = Mlp {
            input: d,
            hidden: h,
            outputs,
            params: vec![0.0; h * d + h + outputs * h + outputs],
        };
        let (b1, w2, b2) = net.offsets();
        let s1 = (2.0 / d.max(1) as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        for v in &mut net.params[..b1] {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in &mut net.params[w2..b2] {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }

        let n_params = net.params.len();
        let mut adam = crate::surrogate::Adam::new(n_params, spec.learning_rate);
        let mut grad = vec![0.0; n_params];
        let mut hidden = vec![0.0; h];
        let mut out = vec![0.0; outputs];
        let mut delta = vec![0.0; outputs];
        let mut order: Vec<usize> = (0..x.n_rows).collect();
        for _ in 0..spec.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(spec.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let xi = x.row(i);
                    let ti = &targets[i * outputs..(i + 1) * outputs];
                    net.forward(xi, &mut hidden, &mut out);
                    match objective {
                        Objective::Squared | Objective::Logistic => {
                            for o in 0..outputs {
                                let pred = if objective == Objective::Squared {
                                    out[o]
                                } else {
                                    sigmoid(out[o])
                                };
                                delta[o] = (pred - ti[o]) * scale;
                            }
                        }
                        Objective::Softmax => {
                            let probs = softmax(&out);
                            for o in 0..outputs {
                                delta[o] = (probs[o] - ti[o]) * scale;
                            }
                        }
                    }
                    for o in 0..outputs {
                        grad[b2 + o] += delta[o];
                        for k in 0..h {
                            grad[w2 + o * h + k] += delta[o] * hidden[k];
                        }
                    }
                    for k in 0..h {
                        if hidden[k] <= 0.0 {
                            continue;
                        }
                        let back: f64 = (0..outputs)
                            .map(|o| delta[o] * net.params[w2 + o * h + k])
                            .sum();
                        grad[b1 + k] += back;
                        for (g, v) in grad[k * d..(k + 1) * d].iter_mut().zip(xi) {
                            *g += back * v;
                        }
                    }
                }
                for (j, g) in grad.iter_mut().enumerate() {
                    let is_weight = j < b1 || (w2..b2).contains(&j);
                    if is_weight {
                        *g += spec.l2 * net.params[j];
                    }
                }
                adam.step(&mut net.params, &grad);
            }
        }
        net
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityResult {
    pub column: String,
    pub score_before: f64,
    pub score_after: f64,
    pub g: f64,
    pub train_diagnostics: EvalDiagnostics,
    pub val_diagnostics: EvalDiagnostics,
}

/// Utility result plus the split with the candidate column appended.
#[derive(Debug, Clone)]
pub struct UtilityEvaluation {
    pub result: UtilityResult,
    pub augmented: SplitPair,
}

/// Evaluates `op` on both sides of `split`, appends the column to copies,
/// retrains from scratch and rescores. `g = score_after − baseline`.
pub fn utility(
    op: &FeatureOperation,
    split: &SplitPair,
    spec: &LearnerSpec,
    baseline: f64,
    seed: u64,
) -> Result<UtilityEvaluation, LearnerError> {
    let train_col = evaluate(&op.expression, &split.train)?;
    let val_col = evaluate(&op.expression, &split.val)?;
    let augmented = split.append_column(&op.name, &train_col.values, &val_col.values)?;
    let column = augmented
        .train
        .column_names()
        .last()
        .cloned()
        .expect("appended column");
    let score_after = train(spec, &augmented.train, seed)?.score(&augmented.val)?;
    let g = score_after - baseline;
    if !g.is_finite() {
        return Err(LearnerError::NonFiniteScore);
    }
    Ok(UtilityEvaluation {
        result: UtilityResult {
            column,
            score_before: baseline,
            score_after,
            g,
            train_diagnostics: train_col.diagnostics,
            val_diagnostics: val_col.diagnostics,
        },
        augmented,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, Column};

    fn cls_table(rows: &[(f64, f64, f64)]) -> TabularDataset {
        TabularDataset::new(
            vec![
                Column::from_f64("a", &rows.iter().map(|r| r.0).collect::<Vec<_>>()),
                Column::from_f64("b", &rows.iter().map(|r| r.1).collect::<Vec<_>>()),
                Column::from_f64("y", &rows.iter().map(|r| r.2).collect::<Vec<_>>()),
            ],
            "y",
            Task::Classification,
            "",
        )
        .unwrap()
    }

    #[test]
    fn zscore_impute_and_one_hot() {
        let train = TabularDataset::new(
            vec![
                Column::from_f64("x", &[1.0, 2.0, 3.0]),
                Column::numeric("m", vec![None, None, None]),
                Column::categorical("c", vec![Some("u".into()), Some("v".into()), None]),
                Column::from_f64("y", &[0.0, 1.0, 0.0]),
            ],
            "y",
            Task::Classification,
            "",
        )
        .unwrap();
        let pre = Preprocessor::fit(&train);
        let x = pre.transform(&train).unwrap();
        assert_eq!(x.n_cols, 4);
        let z = 1.5f64.sqrt();
        assert!((x.row(0)[0] + z).abs() < 1e-12);
        assert!(x.row(1)[0].abs() < 1e-12);
        assert!((x.row(2)[0] - z).abs() < 1e-12);
        assert!(x.values.chunks(4).all(|r| r[1] == 0.0));
        assert_eq!(&x.row(0)[2..], &[1.0, 0.0]);
        assert_eq!(&x.row(2)[2..], &[0.0, 0.0]);

        let val = TabularDataset::new(
            vec![
                Column::from_f64("x", &[2.0]),
                Column::numeric("m", vec![Some(5.0)]),
                Column::categorical("c", vec![Some("w".into())]),
                Column::from_f64("y", &[0.0]),
            ],
            "y",
            Task::Classification,
            "",
        )
        .unwrap();
        let xv = pre.transform(&val).unwrap();
        assert_eq!(xv.row(0), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_variance_column_scaled_by_one() {
        let ds = cls_table(&[(3.0, 1.0, 0.0), (3.0, 2.0, 1.0)]);
        let x = Preprocessor::fit(&ds).transform(&ds).unwrap();
        assert_eq!(x.row(0)[0], 0.0);
    }

    #[test]
    fn single_class_training_is_error() {
        let ds = cls_table(&[(1.0, 1.0, 1.0), (2.0, 2.0, 1.0), (3.0, 0.0, 1.0)]);
        assert!(matches!(
            train(&LearnerSpec::linear(), &ds, 0),
            Err(LearnerError::SingleClass)
        ));
    }

    fn blobs(n: usize, seed: u64) -> TabularDataset {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<(f64, f64, f64)> = (0..n)
            .map(|i| {
                let c = (i % 2) as f64;
                let off = if c == 1.0 { 3.0 } else { -3.0 };
                (
                    off + rng.sample::<f64, _>(StandardNormal),
                    off + rng.sample::<f64, _>(StandardNormal),
                    c,
                )
            })
            .collect();
        cls_table(&rows)
    }

    #[test]
    fn separable_blobs_linear_and_mlp() {
        let s = split(&blobs(200, 1), 0.7, 1).unwrap();
        assert!(baseline_score(&s, &LearnerSpec::linear(), 0).unwrap() >= 0.99);
        assert!(baseline_score(&s, &LearnerSpec::default(), 0).unwrap() >= 0.99);
    }

    #[test]
    fn ridge_recovers_line() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let ds = TabularDataset::new(
            vec![Column::from_f64("x", &xs), Column::from_f64("y", &ys)],
            "y",
            Task::Regression,
            "",
        )
        .unwrap();
        let s = split(&ds, 0.7, 3).unwrap();
        assert!(baseline_score(&s, &LearnerSpec::linear(), 0).unwrap() >= -0.05);
        let neg_mse = LearnerSpec {
            regression_metric: RegressionMetric::NegMse,
            ..LearnerSpec::linear()
        };
        assert!(baseline_score(&s, &neg_mse, 0).unwrap() <= 0.0);
    }

    #[test]
    fn multiclass_macro_auroc() {
        let mut rng = rng_from_seed(4);
        let rows: Vec<(f64, f64, f64)> = (0..150)
            .map(|i| {
                let c = (i % 3) as f64;
                let angle = c * 2.0 * std::f64::consts::PI / 3.0;
                (
                    4.0 * angle.cos() + rng.sample::<f64, _>(StandardNormal),
                    4.0 * angle.sin() + rng.sample::<f64, _>(StandardNormal),
                    c,
                )
            })
            .collect();
        let s = split(&cls_table(&rows), 0.7, 0).unwrap();
        for spec in [LearnerSpec::linear(), LearnerSpec::default()] {
            let j = baseline_score(&s, &spec, 0).unwrap();
            assert!(j > 0.9, "{:?}: {j}", spec.kind);
        }
    }

    #[test]
    fn utility_is_delta_and_deterministic() {
        let s = split(&blobs(120, 2), 0.7, 0).unwrap();
        let spec = LearnerSpec::default();
        let base = baseline_score(&s, &spec, 5).unwrap();
        let op = FeatureOperation::new("a_plus_b", r#"col("a") + col("b")"#, "sum").unwrap();
        let u1 = utility(&op, &s, &spec, base, 5).unwrap();
        let u2 = utility(&op, &s, &spec, base, 5).unwrap();
        assert_eq!(u1.result, u2.result);
        assert_eq!(u1.result.g, u1.result.score_after - base);
        assert_eq!(u1.augmented.train.column_names().len(), 4);
        assert_eq!(s.train.column_names().len(), 3);
    }
}
