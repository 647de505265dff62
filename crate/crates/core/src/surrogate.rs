//! Mean-field Bayesian neural network surrogate.
//!
//! One hidden rectifier layer, a standard normal prior over every weight and
//! bias, and a diagonal Gaussian variational posterior fitted by minimizing
//! `KL(q || prior) - E_q[log N(g | net(x; θ), σ_n²)]` with reparameterized
//! Monte-Carlo gradients. Targets are z-standardized before fitting; every
//! reported moment is mapped back to raw utility units.
//!
//! Parameter layout (flat vector): `W1` row-major `[hidden][input]`, then
//! `b1[hidden]`, `w2[hidden]`, `b2`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{derive_seed, rng_from_seed, sigmoid, softplus, softplus_inverse, SeededRng};

pub const POSTERIOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("non-finite value in encoding {index}")]
    NonFiniteInput { index: usize },
    #[error("encoding dimension {got} does not match posterior input dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid surrogate configuration: {0}")]
    Config(String),
    #[error("unsupported posterior format version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub hidden_width: usize,
    /// Observation noise in standardized-target units.
    pub obs_noise: f64,
    pub mc_samples_train: usize,
    pub mc_samples_predict: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Standard deviation of the random initial means.
    pub init_mean_std: f64,
    /// Initial posterior standard deviation of every parameter.
    pub init_std: f64,
    /// Start optimization from the previous round's means.
    pub warm_start: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            hidden_width: 64,
            obs_noise: 0.05,
            mc_samples_train: 8,
            mc_samples_predict: 64,
            steps: 300,
            learning_rate: 0.01,
            init_mean_std: 0.05,
            init_std: 0.1,
            warm_start: false,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: &str| Err(SurrogateError::Config(m.to_string()));
        if self.hidden_width == 0 {
            return bad("hidden_width must be positive");
        }
        if !(self.obs_noise > 0.0) {
            return bad("obs_noise must be positive");
        }
        if self.mc_samples_train == 0 || self.mc_samples_predict == 0 {
            return bad("sample counts must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.init_std > 0.0) || !(self.init_mean_std >= 0.0) {
            return bad("learning rate and initial scales must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
}

impl Architecture {
    pub fn n_params(&self) -> usize {
        self.hidden * self.input_dim + 2 * self.hidden + 1
    }

    pub(crate) fn b1(&self) -> usize {
        self.hidden * self.input_dim
    }

    pub(crate) fn w2(&self) -> usize {
        self.b1() + self.hidden
    }

    pub(crate) fn b2(&self) -> usize {
        self.w2() + self.hidden
    }

    /// Network output for parameters `theta` at input `x`.
    pub fn forward(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (d, h) = (self.input_dim, self.hidden);
        let mut out = theta[self.b2()];
        for k in 0..h {
            let row = &theta[k * d..(k + 1) * d];
            let pre = theta[self.b1() + k] + dot(row, x);
            if pre > 0.0 {
                out += theta[self.w2() + k] * pre;
            }
        }
        out
    }

    /// Adds `upstream * d net(x; theta) / d theta` into `grad` and returns the
    /// network output.
    pub fn accumulate_gradient(
        &self,
        theta: &[f64],
        x: &[f64],
        upstream: f64,
        grad: &mut [f64],
    ) -> f64 {
        let (d, h) = (self.input_dim, self.hidden);
        let mut out = theta[self.b2()];
        grad[self.b2()] += upstream;
        for k in 0..h {
            let row = &theta[k * d..(k + 1) * d];
            let pre = theta[self.b1() + k] + dot(row, x);
            if pre > 0.0 {
                let w2 = theta[self.w2() + k];
                out += w2 * pre;
                grad[self.w2() + k] += upstream * pre;
                let back = upstream * w2;
                grad[self.b1() + k] += back;
                for (g, xi) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                    *g += back * xi;
                }
            }
        }
        out
    }

    /// Gradient of the output with respect to the parameters.
    pub fn output_gradient(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.n_params()];
        self.accumulate_gradient(theta, x, 1.0, &mut grad);
        grad
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Affine map between raw utilities and the standardized training scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: f64,
    pub scale: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer {
        shift: 0.0,
        scale: 1.0,
    };

    /// Mean and population standard deviation; constant targets are only
    /// centered.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::IDENTITY;
        }
        let shift = crate::util::mean(values);
        let std = crate::util::population_std(values);
        let scale = if std > 1e-12 * shift.abs().max(1.0) {
            std
        } else {
            1.0
        };
        Self { shift, scale }
    }

    pub fn forward(&self, raw: f64) -> f64 {
        (raw - self.shift) / self.scale
    }

    pub fn inverse(&self, standardized: f64) -> f64 {
        self.shift + self.scale * standardized
    }
}

/// Diagonal Gaussian over the surrogate's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    pub version: u32,
    pub architecture: Architecture,
    pub means: Vec<f64>,
    /// Unconstrained parameters; the standard deviation is `softplus(rho)`.
    pub rho: Vec<f64>,
    pub standardizer: Standardizer,
}

impl VariationalPosterior {
    /// The prior itself: means 0, standard deviations 1.
    pub fn prior(architecture: Architecture) -> Self {
        let p = architecture.n_params();
        Self {
            version: POSTERIOR_FORMAT_VERSION,
            architecture,
            means: vec![0.0; p],
            rho: vec![softplus_inverse(1.0); p],
            standardizer: Standardizer::IDENTITY,
        }
    }

    pub fn n_params(&self) -> usize {
        self.means.len()
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input_dim
    }

    pub fn stds(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    /// θ = means + softplus(rho) ⊙ eps
    pub fn reparameterize(&self, eps: &[f64], theta: &mut [f64]) {
        for j in 0..theta.len() {
            theta[j] = self.means[j] + softplus(self.rho[j]) * eps[j];
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("posterior serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let p: Self = serde_json::from_str(text)
            .map_err(|e| SurrogateError::Config(format!("posterior blob: {e}")))?;
        if p.version != POSTERIOR_FORMAT_VERSION {
            return Err(SurrogateError::Version(p.version));
        }
        if p.means.len() != p.architecture.n_params() || p.rho.len() != p.means.len() {
            return Err(SurrogateError::Config(
                "posterior parameter count mismatch".into(),
            ));
        }
        Ok(p)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), SurrogateError> {
        if x.len() != self.input_dim() {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// One history entry: an encoding and its observed utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub input: Vec<f64>,
    pub utility: f64,
}

impl Observation {
    pub fn new(input: Vec<f64>, utility: f64) -> Self {
        Self { input, utility }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveMoments {
    pub mu: f64,
    pub sigma: f64,
    pub n_samples: usize,
}

/// Fills `out` with standard normal draws from `rng`, in order.
pub fn draw_standard_normals(rng: &mut SeededRng, out: &mut [f64]) {
    for e in out.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
}

/// KL(q || N(0, I)).
pub fn kl_to_standard_normal(means: &[f64], rho: &[f64]) -> f64 {
    means
        .iter()
        .zip(rho)
        .map(|(&m, &r)| {
            let s = softplus(r);
            -s.ln() + 0.5 * (s * s + m * m) - 0.5
        })
        .sum()
}

/// Value of the fit objective split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub kl: f64,
    /// Monte-Carlo expected negative log-likelihood (sum over observations).
    pub nll: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.kl + self.nll
    }
}

/// The fit objective over a fixed history. Inputs are stored sparsely and
/// only parameters that can reach the output for some observed input
/// (first-layer weights on dimensions that are non-zero somewhere, plus all
/// biases and output weights) receive noise draws; the rest enter through
/// the KL term alone.
struct FitProblem {
    arch: Architecture,
    inputs: Vec<Vec<(usize, f64)>>,
    targets: Vec<f64>,
    noise: f64,
    active: Vec<usize>,
}

impl FitProblem {
    fn new(
        arch: Architecture,
        history: &[Observation],
        standardizer: Standardizer,
        noise: f64,
    ) -> Self {
        let d = arch.input_dim;
        let inputs: Vec<Vec<(usize, f64)>> = history
            .iter()
            .map(|o| {
                o.input
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        let mut used = vec![false; d];
        for x in &inputs {
            for &(i, _) in x {
                used[i] = true;
            }
        }
        let mut active: Vec<usize> = (0..arch.hidden)
            .flat_map(|k| {
                (0..d)
                    .filter(|i| used[*i])
                    .map(move |i| k * d + i)
                    .collect::<Vec<_>>()
            })
            .collect();
        active.extend(arch.b1()..arch.n_params());
        Self {
            arch,
            inputs,
            targets: history
                .iter()
                .map(|o| standardizer.forward(o.utility))
                .collect(),
            noise,
            active,
        }
    }

    fn n_draws(&self) -> usize {
        self.active.len()
    }

    fn forward(&self, theta: &[f64], x: &[(usize, f64)]) -> f64 {
        let (d, a) = (self.arch.input_dim, self.arch);
        let mut out = theta[a.b2()];
        for k in 0..a.hidden {
            let pre = theta[a.b1() + k] + x.iter().map(|&(i, v)| theta[k * d + i] * v).sum::<f64>();
            if pre > 0.0 {
                out += theta[a.w2() + k] * pre;
            }
        }
        out
    }

    fn accumulate_gradient(
        &self,
        theta: &[f64],
        x: &[(usize, f64)],
        upstream: f64,
        grad: &mut [f64],
    ) -> f64 {
        let (d, a) = (self.arch.input_dim, self.arch);
        let mut out = theta[a.b2()];
        grad[a.b2()] += upstream;
        for k in 0..a.hidden {
            let pre = theta[a.b1() + k] + x.iter().map(|&(i, v)| theta[k * d + i] * v).sum::<f64>();
            if pre > 0.0 {
                let w2 = theta[a.w2() + k];
                out += w2 * pre;
                grad[a.w2() + k] += upstream * pre;
                let back = upstream * w2;
                grad[a.b1() + k] += back;
                for &(i, v) in x {
                    grad[k * d + i] += back * v;
                }
            }
        }
        out
    }

    /// Objective and (optionally) its gradient with respect to (means, rho)
    /// for a fixed set of noise draws, one value per active parameter. With
    /// `active_only` the KL value is skipped and only active gradient entries
    /// are written.
    fn evaluate(
        &self,
        means: &[f64],
        rho: &[f64],
        draws: &[Vec<f64>],
        grad: Option<(&mut [f64], &mut [f64])>,
        active_only: bool,
    ) -> ObjectiveTerms {
        let var = self.noise * self.noise;
        let log_norm = 0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let kl = if active_only {
            0.0
        } else {
            kl_to_standard_normal(means, rho)
        };
        let s_count = draws.len() as f64;
        let p = means.len();
        let mut stds = vec![0.0; p];
        let mut sig = vec![0.0; p];
        let fill = |j: usize, stds: &mut [f64], sig: &mut [f64]| {
            stds[j] = softplus(rho[j]);
            sig[j] = sigmoid(rho[j]);
        };
        if active_only {
            for &j in &self.active {
                fill(j, &mut stds, &mut sig);
            }
        } else {
            for j in 0..p {
                fill(j, &mut stds, &mut sig);
            }
        }

        let mut theta = means.to_vec();
        let mut nll = 0.0;
        match grad {
            None => {
                for eps in draws {
                    for (e, &j) in eps.iter().zip(&self.active) {
                        theta[j] = means[j] + stds[j] * e;
                    }
                    for (x, y) in self.inputs.iter().zip(&self.targets) {
                        let r = y - self.forward(&theta, x);
                        nll += (r * r / (2.0 * var) + log_norm) / s_count;
                    }
                }
            }
            Some((g_means, g_rho)) => {
                let kl_grad = |j: usize, g_means: &mut [f64], g_rho: &mut [f64]| {
                    let s = stds[j];
                    g_means[j] = means[j];
                    g_rho[j] = (s - 1.0 / s) * sig[j];
                };
                if active_only {
                    for &j in &self.active {
                        kl_grad(j, g_means, g_rho);
                    }
                } else {
                    for j in 0..p {
                        kl_grad(j, g_means, g_rho);
                    }
                }
                let mut g_theta = vec![0.0; p];
                for eps in draws {
                    for (e, &j) in eps.iter().zip(&self.active) {
                        theta[j] = means[j] + stds[j] * e;
                        g_theta[j] = 0.0;
                    }
                    for (x, y) in self.inputs.iter().zip(&self.targets) {
                        let f = self.forward(&theta, x);
                        let r = y - f;
                        nll += (r * r / (2.0 * var) + log_norm) / s_count;
                        self.accumulate_gradient(&theta, x, -r / var / s_count, &mut g_theta);
                    }
                    for (e, &j) in eps.iter().zip(&self.active) {
                        g_means[j] += g_theta[j];
                        g_rho[j] += g_theta[j] * e * sig[j];
                    }
                }
            }
        }
        ObjectiveTerms { kl, nll }
    }
}

fn check_history(history: &[Observation]) -> Result<usize, SurrogateError> {
    let dim = history.first().map(|o| o.input.len()).unwrap_or(0);
    for (i, o) in history.iter().enumerate() {
        if o.input.len() != dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: dim,
                got: o.input.len(),
            });
        }
        if o.input.iter().any(|v| !v.is_finite()) || !o.utility.is_finite() {
            return Err(SurrogateError::NonFiniteInput { index: i });
        }
    }
    Ok(dim)
}

fn objective_draws(p: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..samples)
        .map(|_| {
            let mut eps = vec![0.0; p];
            draw_standard_normals(&mut rng, &mut eps);
            eps
        })
        .collect()
}

/// The fit objective at the posterior's parameters, with
/// `config.mc_samples_train` noise draws taken from `seed`. Targets are
/// standardized over `history` exactly as in [`fit`].
pub fn elbo_loss(
    posterior: &VariationalPosterior,
    history: &[Observation],
    config: &SurrogateConfig,
    seed: u64,
) -> Result<ObjectiveTerms, SurrogateError> {
    check_history(history)?;
    let standardizer = Standardizer::fit(&history.iter().map(|o| o.utility).collect::<Vec<_>>());
    let problem = FitProblem::new(
        posterior.architecture,
        history,
        standardizer,
        config.obs_noise,
    );
    let draws = objective_draws(problem.n_draws(), config.mc_samples_train, seed);
    Ok(problem.evaluate(&posterior.means, &posterior.rho, &draws, None, false))
}

/// Analytic gradient of [`elbo_loss`] with respect to (means, rho), using the
/// same noise draws.
pub fn elbo_loss_gradient(
    posterior: &VariationalPosterior,
    history: &[Observation],
    config: &SurrogateConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), SurrogateError> {
    check_history(history)?;
    let standardizer = Standardizer::fit(&history.iter().map(|o| o.utility).collect::<Vec<_>>());
    let problem = FitProblem::new(
        posterior.architecture,
        history,
        standardizer,
        config.obs_noise,
    );
    let p = posterior.n_params();
    let draws = objective_draws(problem.n_draws(), config.mc_samples_train, seed);
    let mut g_means = vec![0.0; p];
    let mut g_rho = vec![0.0; p];
    problem.evaluate(
        &posterior.means,
        &posterior.rho,
        &draws,
        Some((&mut g_means, &mut g_rho)),
        false,
    );
    Ok((g_means, g_rho))
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for j in 0..params.len() {
            self.m[j] = Self::BETA1 * self.m[j] + (1.0 - Self::BETA1) * grad[j];
            self.v[j] = Self::BETA2 * self.v[j] + (1.0 - Self::BETA2) * grad[j] * grad[j];
            let m_hat = self.m[j] / c1;
            let v_hat = self.v[j] / c2;
            params[j] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Fits the variational posterior to `history`.
///
/// An empty history returns the prior. Otherwise the means start at small
/// random values (or at `warm_start`'s means when enabled and compatible),
/// standard deviations at `init_std`, and `config.steps` Adam steps are
/// taken on the reparameterized objective. Parameters that cannot affect the
/// output for any observed input are set to the prior, the exact minimizer of
/// their (KL-only) share of the objective. Deterministic in `seed`.
pub fn fit(
    history: &[Observation],
    input_dim: usize,
    config: &SurrogateConfig,
    seed: u64,
    warm_start: Option<&VariationalPosterior>,
) -> Result<VariationalPosterior, SurrogateError> {
    config.validate()?;
    let dim = check_history(history)?;
    let arch = Architecture {
        input_dim,
        hidden: config.hidden_width,
    };
    if history.is_empty() {
        return Ok(VariationalPosterior::prior(arch));
    }
    if dim != input_dim {
        return Err(SurrogateError::DimensionMismatch {
            expected: input_dim,
            got: dim,
        });
    }
    let p = arch.n_params();
    let standardizer = Standardizer::fit(&history.iter().map(|o| o.utility).collect::<Vec<_>>());
    let problem = FitProblem::new(arch, history, standardizer, config.obs_noise);

    let mut init_rng = rng_from_seed(derive_seed(seed, 1, 0));
    let mut means = match warm_start {
        Some(prev) if config.warm_start && prev.architecture == arch => prev.means.clone(),
        _ => {
            let mut m = vec![0.0; p];
            draw_standard_normals(&mut init_rng, &mut m);
            m.iter_mut().for_each(|v| *v *= config.init_mean_std);
            m
        }
    };
    // Coordinates that no observation can reach only enter the KL term,
    // whose minimizer is the prior; they are set there directly.
    let mut rho = vec![softplus_inverse(1.0); p];
    let mut is_active = vec![false; p];
    for &j in &problem.active {
        is_active[j] = true;
        rho[j] = softplus_inverse(config.init_std);
    }
    for (m, _) in means.iter_mut().zip(&is_active).filter(|(_, a)| !**a) {
        *m = 0.0;
    }

    let n = problem.active.len();
    let mut noise_rng = rng_from_seed(derive_seed(seed, 2, 0));
    let mut draws = vec![vec![0.0; problem.n_draws()]; config.mc_samples_train];
    let mut adam_means = Adam::new(n, config.learning_rate);
    let mut adam_rho = Adam::new(n, config.learning_rate);
    let mut g_means = vec![0.0; p];
    let mut g_rho = vec![0.0; p];
    let gather = |full: &[f64]| -> Vec<f64> { problem.active.iter().map(|&j| full[j]).collect() };
    let mut m_active = gather(&means);
    let mut r_active = gather(&rho);
    for _ in 0..config.steps {
        for eps in draws.iter_mut() {
            draw_standard_normals(&mut noise_rng, eps);
        }
        problem.evaluate(&means, &rho, &draws, Some((&mut g_means, &mut g_rho)), true);
        adam_means.step(&mut m_active, &gather(&g_means));
        adam_rho.step(&mut r_active, &gather(&g_rho));
        for (a, &j) in problem.active.iter().enumerate() {
            means[j] = m_active[a];
            rho[j] = r_active[a];
        }
    }
    Ok(VariationalPosterior {
        version: POSTERIOR_FORMAT_VERSION,
        architecture: arch,
        means,
        rho,
        standardizer,
    })
}

/// Monte-Carlo predictive moments for several inputs under one shared set of
/// weight draws.
///
/// Draw order: for each of the `samples` draws, one standard normal per
/// parameter in layout order, from a ChaCha8 stream seeded with `seed`.
/// `sigma` is the population standard deviation across draws. Both moments
/// are returned in raw utility units.
pub fn predict_batch(
    posterior: &VariationalPosterior,
    inputs: &[&[f64]],
    samples: usize,
    seed: u64,
) -> Result<Vec<PredictiveMoments>, SurrogateError> {
    for x in inputs {
        posterior.check_input(x)?;
    }
    let samples = samples.max(1);
    let p = posterior.n_params();
    let mut rng = rng_from_seed(seed);
    let mut eps = vec![0.0; p];
    let mut theta = vec![0.0; p];
    let mut outputs = vec![Vec::with_capacity(samples); inputs.len()];
    for _ in 0..samples {
        draw_standard_normals(&mut rng, &mut eps);
        posterior.reparameterize(&eps, &mut theta);
        for (out, x) in outputs.iter_mut().zip(inputs) {
            out.push(posterior.architecture.forward(&theta, x));
        }
    }
    let st = posterior.standardizer;
    Ok(outputs
        .into_iter()
        .map(|values| {
            let mu = crate::util::mean(&values);
            let sigma = crate::util::population_std(&values);
            PredictiveMoments {
                mu: st.inverse(mu),
                sigma: st.scale * sigma,
                n_samples: samples,
            }
        })
        .collect())
}

pub fn predict(
    posterior: &VariationalPosterior,
    input: &[f64],
    samples: usize,
    seed: u64,
) -> Result<PredictiveMoments, SurrogateError> {
    Ok(predict_batch(posterior, &[input], samples, seed)?[0])
}

/// Confidence multiplier `2 ln(|S| π² t² / (3δ))` making `μ ± √β σ` a
/// simultaneous 1-δ band over all rounds and pool members.
pub fn beta(t: usize, pool_size: usize, delta: f64) -> f64 {
    let t = t as f64;
    2.0 * (pool_size as f64 * std::f64::consts::PI.powi(2) * t * t / (3.0 * delta)).ln()
}

pub fn ucb(moments: &PredictiveMoments, beta: f64) -> f64 {
    moments.mu + beta.sqrt() * moments.sigma
}

pub fn lcb(moments: &PredictiveMoments, beta: f64) -> f64 {
    moments.mu - beta.sqrt() * moments.sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SurrogateConfig {
        SurrogateConfig {
            hidden_width: 8,
            ..SurrogateConfig::default()
        }
    }

    #[test]
    fn beta_reference_value() {
        let expected = 2.0 * (15.0 * std::f64::consts::PI.powi(2) / 0.3).ln();
        assert!((beta(1, 15, 0.1) - expected).abs() < 1e-12);
        assert!((beta(1, 15, 0.1) - 12.4029).abs() < 1e-3);
        assert!(beta(2, 15, 0.1) > beta(1, 15, 0.1));
    }

    #[test]
    fn beta_inverse_identity() {
        // pool·π²·t² = 3δ·e  ⇒  β = 2
        let delta = std::f64::consts::PI.powi(2) / (3.0 * std::f64::consts::E);
        assert!((beta(1, 1, delta) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn confidence_bounds() {
        let m = PredictiveMoments {
            mu: 0.2,
            sigma: 0.1,
            n_samples: 1,
        };
        assert!((ucb(&m, 4.0) - 0.4).abs() < 1e-15);
        assert!(lcb(&m, 4.0).abs() < 1e-15);
        let flat = PredictiveMoments {
            mu: 0.3,
            sigma: 0.0,
            n_samples: 1,
        };
        assert_eq!(ucb(&flat, 9.0), 0.3);
        assert_eq!(lcb(&flat, 9.0), 0.3);
        assert_eq!(ucb(&m, 0.0), 0.2);
    }

    #[test]
    fn empty_history_gives_prior() {
        let q = fit(&[], 5, &small_config(), 0, None).unwrap();
        assert_eq!(
            q,
            VariationalPosterior::prior(Architecture {
                input_dim: 5,
                hidden: 8
            })
        );
        assert!(q.stds().iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(kl_to_standard_normal(&q.means, &q.rho).abs() < 1e-12);
    }

    #[test]
    fn prior_predictive_matches_independent_sampling() {
        use rand::Rng;
        use rand_distr::StandardNormal;

        let cfg = SurrogateConfig::default();
        let x = vec![0.3; 5];
        let q = fit(&[], 5, &cfg, 0, None).unwrap();
        let m = predict(&q, &x, 64, 0).unwrap();

        // f = b2 + sum_h w2_h relu(w1_h . x + b1_h), every weight N(0, 1)
        let mut rng = crate::util::rng_from_seed(0xD1CE);
        let mut normal = || rng.sample::<f64, _>(StandardNormal);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let mut f = normal();
                for _ in 0..cfg.hidden_width {
                    let pre: f64 = x.iter().map(|xi| xi * normal()).sum::<f64>() + normal();
                    f += normal() * pre.max(0.0);
                }
                f
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let std = (draws.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();

        assert!(m.sigma > 0.0);
        assert!(mean.abs() < 0.2);
        assert!((m.mu - mean).abs() <= 4.0 * std / 8.0, "mu {} vs {mean}", m.mu);
        assert!((m.sigma / std - 1.0).abs() < 0.4, "sigma {} vs {std}", m.sigma);
    }

    #[test]
    fn single_sample_has_zero_sigma() {
        let q = VariationalPosterior::prior(Architecture {
            input_dim: 3,
            hidden: 4,
        });
        let m = predict(&q, &[0.1, 0.2, 0.3], 1, 5).unwrap();
        assert_eq!(m.sigma, 0.0);
        assert_eq!(m.n_samples, 1);
    }

    #[test]
    fn collapsed_posterior_has_tiny_sigma() {
        let mut q = VariationalPosterior::prior(Architecture {
            input_dim: 3,
            hidden: 4,
        });
        q.means
            .iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m = 0.1 * i as f64);
        q.rho.iter_mut().for_each(|r| *r = softplus_inverse(1e-12));
        let m = predict(&q, &[0.5, -0.2, 1.0], 64, 1).unwrap();
        assert!(m.sigma <= 1e-6, "{}", m.sigma);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let q = VariationalPosterior::prior(Architecture {
            input_dim: 3,
            hidden: 4,
        });
        assert_eq!(
            predict(&q, &[1.0], 4, 0),
            Err(SurrogateError::DimensionMismatch {
                expected: 3,
                got: 1
            })
        );
    }

    #[test]
    fn non_finite_history_rejected() {
        let h = vec![Observation::new(vec![f64::NAN, 0.0], 1.0)];
        assert_eq!(
            fit(&h, 2, &small_config(), 0, None),
            Err(SurrogateError::NonFiniteInput { index: 0 })
        );
    }

    #[test]
    fn kl_is_zero_at_prior_and_duplicates_double_likelihood() {
        let arch = Architecture {
            input_dim: 2,
            hidden: 3,
        };
        let q = VariationalPosterior::prior(arch);
        let h = vec![
            Observation::new(vec![0.5, -1.0], 0.3),
            Observation::new(vec![1.0, 0.2], -0.1),
        ];
        let doubled: Vec<_> = h.iter().chain(h.iter()).cloned().collect();
        let cfg = small_config();
        let once = elbo_loss(&q, &h, &cfg, 3).unwrap();
        let twice = elbo_loss(&q, &doubled, &cfg, 3).unwrap();
        assert!(once.kl.abs() < 1e-12);
        assert!((twice.nll - 2.0 * once.nll).abs() < 1e-9 * once.nll.abs().max(1.0));
    }

    #[test]
    fn fit_is_deterministic() {
        let h = vec![
            Observation::new(vec![0.5, -1.0, 0.0], 0.3),
            Observation::new(vec![1.0, 0.2, 1.0], -0.1),
            Observation::new(vec![1.0, 0.2, 1.0], -0.1),
        ];
        let cfg = SurrogateConfig {
            steps: 20,
            ..small_config()
        };
        let a = fit(&h, 3, &cfg, 11, None).unwrap();
        let b = fit(&h, 3, &cfg, 11, None).unwrap();
        assert_eq!(a, b);
        let c = fit(&h, 3, &cfg, 12, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn posterior_json_roundtrip_and_version_check() {
        let q = VariationalPosterior::prior(Architecture {
            input_dim: 2,
            hidden: 2,
        });
        let back = VariationalPosterior::from_json(&q.to_json()).unwrap();
        assert_eq!(q, back);
        let mut bad = q.clone();
        bad.version = 99;
        assert_eq!(
            VariationalPosterior::from_json(&bad.to_json()),
            Err(SurrogateError::Version(99))
        );
    }

    #[test]
    fn standardizer_centers_constant_targets() {
        let s = Standardizer::fit(&[1.0, 1.0]);
        assert_eq!(
            s,
            Standardizer {
                shift: 1.0,
                scale: 1.0
            }
        );
        let s = Standardizer::fit(&[1.0, 3.0]);
        assert_eq!(
            s,
            Standardizer {
                shift: 2.0,
                scale: 1.0
            }
        );
        let s = Standardizer::fit(&[0.0, 4.0]);
        assert_eq!(s.scale, 2.0);
        assert_eq!(s.inverse(s.forward(3.3)), 3.3);
    }
}
