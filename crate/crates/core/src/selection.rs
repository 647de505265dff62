//! Round policy: UCB choice, pairing, query trigger, preference update and
//! final choice.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surrogate::{
    self, draw_standard_normals, Adam, PredictiveMoments, SurrogateError, VariationalPosterior,
};
use crate::util::{
    inverse_mills_ratio, log_normal_cdf, normal_cdf, rng_from_seed, sigmoid, softplus,
};

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("empty candidate pool")]
    EmptyPool,
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElicitationConfig {
    pub delta: f64,
    pub gamma_kappa: f64,
    pub eta: f64,
    pub update_steps: usize,
    pub update_learning_rate: f64,
    pub update_mc_samples: usize,
}

impl Default for ElicitationConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            gamma_kappa: 4.0,
            eta: 1.0,
            update_steps: 25,
            update_learning_rate: 1e-2,
            update_mc_samples: 8,
        }
    }
}

impl ElicitationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.gamma_kappa >= 0.0) {
            return Err("gamma_kappa must be non-negative".into());
        }
        if !(self.eta > 0.0) {
            return Err("eta must be positive".into());
        }
        if self.update_mc_samples == 0 || !(self.update_learning_rate > 0.0) {
            return Err("preference update needs samples and a positive learning rate".into());
        }
        Ok(())
    }
}

/// A pool member as seen by the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub proposal_round: usize,
    pub moments: PredictiveMoments,
}

/// Orders by UCB descending, then earliest proposal round, then name.
fn rank(a: &CandidateScore, b: &CandidateScore, beta: f64) -> Ordering {
    let ua = surrogate::ucb(&a.moments, beta);
    let ub = surrogate::ucb(&b.moments, beta);
    ub.partial_cmp(&ua)
        .unwrap_or(Ordering::Equal)
        .then(a.proposal_round.cmp(&b.proposal_round))
        .then_with(|| a.name.cmp(&b.name))
}

fn best_index(pool: &[CandidateScore], beta: f64, skip: Option<usize>) -> Option<usize> {
    (0..pool.len())
        .filter(|&i| Some(i) != skip)
        .min_by(|&i, &j| rank(&pool[i], &pool[j], beta))
}

/// Index of the UCB maximizer.
pub fn select_first(pool: &[CandidateScore], beta: f64) -> Result<usize, SelectionError> {
    best_index(pool, beta, None).ok_or(SelectionError::EmptyPool)
}

/// Index of the UCB maximizer among the pool without `first`.
pub fn select_second(pool: &[CandidateScore], beta: f64, first: usize) -> Option<usize> {
    best_index(pool, beta, Some(first))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryReason {
    NoOverlap,
    LowUncertainty,
    Ok,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryVerdict {
    pub query: bool,
    pub reason: QueryReason,
    pub overlap: bool,
    pub uncertainty: bool,
}

/// C1: `UCB(b) > LCB(a)` (strict). C2: `√β (σ_a + σ_b) ≥ γ_κ` (inclusive).
/// When both fail the reported reason is `NoOverlap`.
pub fn should_query(
    a: &PredictiveMoments,
    b: &PredictiveMoments,
    beta: f64,
    config: &ElicitationConfig,
) -> QueryVerdict {
    let overlap = surrogate::ucb(b, beta) > surrogate::lcb(a, beta);
    let uncertainty = expected_gain_bound(a, b, beta) >= config.gamma_kappa;
    let reason = if !overlap {
        QueryReason::NoOverlap
    } else if !uncertainty {
        QueryReason::LowUncertainty
    } else {
        QueryReason::Ok
    };
    QueryVerdict {
        query: overlap && uncertainty,
        reason,
        overlap,
        uncertainty,
    }
}

/// `√β (σ_a + σ_b)`, the bound on the gain from switching candidates.
pub fn expected_gain_bound(a: &PredictiveMoments, b: &PredictiveMoments, beta: f64) -> f64 {
    beta.sqrt() * (a.sigma + b.sigma)
}

/// A pairwise answer: `A` means the first candidate was preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Preference {
    A,
    B,
}

impl Preference {
    pub fn sign(self) -> f64 {
        match self {
            Preference::A => 1.0,
            Preference::B => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Preference::A => Preference::B,
            Preference::B => Preference::A,
        }
    }
}

impl From<Preference> for i8 {
    fn from(p: Preference) -> i8 {
        p.sign() as i8
    }
}

impl TryFrom<i8> for Preference {
    type Error = String;
    fn try_from(z: i8) -> Result<Self, String> {
        match z {
            1 => Ok(Preference::A),
            -1 => Ok(Preference::B),
            other => Err(format!("preference must be +1 or -1, got {other}")),
        }
    }
}

/// `Φ(η z (u_a − u_b))`.
pub fn probit_likelihood(z: Preference, u_a: f64, u_b: f64, eta: f64) -> f64 {
    normal_cdf(eta * z.sign() * (u_a - u_b))
}

/// KL between two diagonal Gaussians given as (means, rho) pairs.
pub fn kl_between(means_new: &[f64], rho_new: &[f64], means_ref: &[f64], rho_ref: &[f64]) -> f64 {
    let mut kl = 0.0;
    for j in 0..means_new.len() {
        let s_new = softplus(rho_new[j]);
        let s_ref = softplus(rho_ref[j]);
        let d = means_new[j] - means_ref[j];
        kl += (s_ref / s_new).ln() + (s_new * s_new + d * d) / (2.0 * s_ref * s_ref) - 0.5;
    }
    kl
}

struct PreferenceProblem<'a> {
    reference: &'a VariationalPosterior,
    enc_a: &'a [f64],
    enc_b: &'a [f64],
    /// η z, folded into one factor.
    scale: f64,
}

impl<'a> PreferenceProblem<'a> {
    fn new(
        reference: &'a VariationalPosterior,
        enc_a: &'a [f64],
        enc_b: &'a [f64],
        z: Preference,
        eta: f64,
    ) -> Result<Self, SelectionError> {
        for enc in [enc_a, enc_b] {
            if enc.len() != reference.input_dim() {
                return Err(SurrogateError::DimensionMismatch {
                    expected: reference.input_dim(),
                    got: enc.len(),
                }
                .into());
            }
        }
        Ok(Self {
            reference,
            enc_a,
            enc_b,
            scale: eta * z.sign(),
        })
    }

    /// Objective value; fills the (means, rho) gradient when requested. The
    /// network difference is taken in standardized units, which only rescales
    /// η by a positive constant.
    fn evaluate(
        &self,
        means: &[f64],
        rho: &[f64],
        draws: &[Vec<f64>],
        grad: Option<(&mut [f64], &mut [f64])>,
    ) -> f64 {
        let arch = self.reference.architecture;
        let p = means.len();
        let r_means = &self.reference.means;
        let r_rho = &self.reference.rho;
        let kl = kl_between(means, rho, r_means, r_rho);
        let stds: Vec<f64> = rho.iter().map(|&r| softplus(r)).collect();
        let count = draws.len() as f64;
        let mut theta = vec![0.0; p];
        let mut nll = 0.0;
        match grad {
            None => {
                for eps in draws {
                    for j in 0..p {
                        theta[j] = means[j] + stds[j] * eps[j];
                    }
                    let diff = arch.forward(&theta, self.enc_a) - arch.forward(&theta, self.enc_b);
                    nll -= log_normal_cdf(self.scale * diff) / count;
                }
            }
            Some((g_means, g_rho)) => {
                for j in 0..p {
                    let s_ref = softplus(r_rho[j]);
                    let var_ref = s_ref * s_ref;
                    g_means[j] = (means[j] - r_means[j]) / var_ref;
                    g_rho[j] = (-1.0 / stds[j] + stds[j] / var_ref) * sigmoid(rho[j]);
                }
                let mut g_theta = vec![0.0; p];
                for eps in draws {
                    for j in 0..p {
                        theta[j] = means[j] + stds[j] * eps[j];
                    }
                    let fa = arch.forward(&theta, self.enc_a);
                    let fb = arch.forward(&theta, self.enc_b);
                    let x = self.scale * (fa - fb);
                    nll -= log_normal_cdf(x) / count;
                    // d(-log Φ(x))/dx = -φ(x)/Φ(x)
                    let up = -inverse_mills_ratio(x) * self.scale / count;
                    g_theta.iter_mut().for_each(|g| *g = 0.0);
                    arch.accumulate_gradient(&theta, self.enc_a, up, &mut g_theta);
                    arch.accumulate_gradient(&theta, self.enc_b, -up, &mut g_theta);
                    for j in 0..p {
                        g_means[j] += g_theta[j];
                        g_rho[j] += g_theta[j] * eps[j] * sigmoid(rho[j]);
                    }
                }
            }
        }
        kl + nll
    }
}

fn draws(p: usize, samples: usize, rng: &mut crate::util::SeededRng) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|_| {
            let mut eps = vec![0.0; p];
            draw_standard_normals(rng, &mut eps);
            eps
        })
        .collect()
}

/// Preference-update objective of `candidate` relative to `reference`, with
/// `config.update_mc_samples` draws from `seed`.
pub fn preference_loss(
    reference: &VariationalPosterior,
    candidate: &VariationalPosterior,
    enc_a: &[f64],
    enc_b: &[f64],
    z: Preference,
    config: &ElicitationConfig,
    seed: u64,
) -> Result<f64, SelectionError> {
    let problem = PreferenceProblem::new(reference, enc_a, enc_b, z, config.eta)?;
    let eps = draws(
        candidate.n_params(),
        config.update_mc_samples,
        &mut rng_from_seed(seed),
    );
    Ok(problem.evaluate(&candidate.means, &candidate.rho, &eps, None))
}

/// Analytic gradient of [`preference_loss`] with respect to the candidate's
/// (means, rho).
pub fn preference_loss_gradient(
    reference: &VariationalPosterior,
    candidate: &VariationalPosterior,
    enc_a: &[f64],
    enc_b: &[f64],
    z: Preference,
    config: &ElicitationConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>), SelectionError> {
    let problem = PreferenceProblem::new(reference, enc_a, enc_b, z, config.eta)?;
    let p = candidate.n_params();
    let eps = draws(p, config.update_mc_samples, &mut rng_from_seed(seed));
    let mut gm = vec![0.0; p];
    let mut gr = vec![0.0; p];
    problem.evaluate(
        &candidate.means,
        &candidate.rho,
        &eps,
        Some((&mut gm, &mut gr)),
    );
    Ok((gm, gr))
}

/// Folds one pairwise answer into the posterior: `update_steps` Adam steps on
/// `KL(q'||q) − E_q'[log Φ(η z (f(a) − f(b)))]` starting from `q`. Returns a
/// new posterior; `posterior` is untouched.
pub fn update_with_preference(
    posterior: &VariationalPosterior,
    enc_a: &[f64],
    enc_b: &[f64],
    z: Preference,
    config: &ElicitationConfig,
    seed: u64,
) -> Result<VariationalPosterior, SelectionError> {
    let problem = PreferenceProblem::new(posterior, enc_a, enc_b, z, config.eta)?;
    let mut updated = posterior.clone();
    let p = updated.n_params();
    let mut rng = rng_from_seed(seed);
    let mut adam_m = Adam::new(p, config.update_learning_rate);
    let mut adam_r = Adam::new(p, config.update_learning_rate);
    let mut gm = vec![0.0; p];
    let mut gr = vec![0.0; p];
    let mut eps = vec![vec![0.0; p]; config.update_mc_samples];
    for _ in 0..config.update_steps {
        for e in eps.iter_mut() {
            draw_standard_normals(&mut rng, e);
        }
        problem.evaluate(&updated.means, &updated.rho, &eps, Some((&mut gm, &mut gr)));
        adam_m.step(&mut updated.means, &gm);
        adam_r.step(&mut updated.rho, &gr);
    }
    Ok(updated)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalSelection {
    pub choice: Choice,
    pub moments_a: PredictiveMoments,
    pub moments_b: PredictiveMoments,
}

/// Recomputes both candidates' moments under `posterior` (shared draws) and
/// returns the UCB winner; an exact tie goes to `A`.
pub fn select_final(
    posterior: &VariationalPosterior,
    enc_a: &[f64],
    enc_b: &[f64],
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<FinalSelection, SelectionError> {
    let m = surrogate::predict_batch(posterior, &[enc_a, enc_b], samples, seed)?;
    let choice = if surrogate::ucb(&m[1], beta) > surrogate::ucb(&m[0], beta) {
        Choice::B
    } else {
        Choice::A
    };
    Ok(FinalSelection {
        choice,
        moments_a: m[0],
        moments_b: m[1],
    })
}

/// Identifies an operation inside round logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub name: String,
    pub expression: String,
    pub proposal_round: usize,
}

/// Per-round policy outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDecision {
    pub beta: f64,
    pub e_a: CandidateRef,
    pub moments_a: PredictiveMoments,
    pub e_b: Option<CandidateRef>,
    pub moments_b: Option<PredictiveMoments>,
    pub verdict: Option<QueryVerdict>,
    pub expected_gain_bound: Option<f64>,
    pub queried: bool,
    pub feedback: Option<Preference>,
    /// The query was issued but no answer arrived in time.
    pub timed_out: bool,
    pub moments_a_after: Option<PredictiveMoments>,
    pub moments_b_after: Option<PredictiveMoments>,
    pub selected: Choice,
}

impl RoundDecision {
    pub fn selected_ref(&self) -> &CandidateRef {
        match self.selected {
            Choice::A => &self.e_a,
            Choice::B => self
                .e_b
                .as_ref()
                .expect("validated: B selected implies e_b"),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.queried && self.e_b.is_none() {
            return Err("queried round without a second candidate".into());
        }
        if self.feedback.is_some() && !self.queried {
            return Err("feedback recorded for an unqueried round".into());
        }
        if self.feedback.is_some() && self.timed_out {
            return Err("feedback recorded for a timed-out query".into());
        }
        if self.selected == Choice::B && self.e_b.is_none() {
            return Err("second candidate selected but absent".into());
        }
        if self.feedback.is_none() && self.selected == Choice::B {
            return Err("second candidate selected without feedback".into());
        }
        Ok(())
    }
}
