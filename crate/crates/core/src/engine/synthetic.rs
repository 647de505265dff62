//! Synthetic utility tasks with known ground truth, for coverage and regret
//! measurements of the selection policy.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsl::FeatureOperation;
use crate::oracle::{ElicitOutcome, FeedbackSource, PreferenceFeedback, SimulatedOracle};
use crate::selection::{ElicitationConfig, QueryReason};
use crate::surrogate::{self, Observation, SurrogateConfig, VariationalPosterior};
use crate::util::{derive_seed, rng_from_seed, SeededRng};

use super::policy::{decide, PolicyContext, PoolView};
use super::{streams, EngineError};

const TRUTH_STREAM: u64 = 7;
const CANDIDATE_STREAM: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SyntheticTask {
    /// Each round the true utility is the first-order expansion of the
    /// surrogate around the current posterior mean, with a weight offset
    /// drawn from the posterior itself: `g(e) = ĝ(φ; M) + ∇ĝ(φ; M)·w`,
    /// `w ~ N(0, diag(s²))`.
    Linearized { input_dim: usize },
    /// Fixed `w ~ N(0, I)`, encodings `φ ~ N(0, I/d)`, `g = w·φ`.
    HiddenLinear { input_dim: usize },
}

impl SyntheticTask {
    pub fn input_dim(&self) -> usize {
        match *self {
            SyntheticTask::Linearized { input_dim } | SyntheticTask::HiddenLinear { input_dim } => {
                input_dim
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub task: SyntheticTask,
    pub rounds: usize,
    pub pool_size: usize,
    pub seed: u64,
    /// Consult a simulated oracle when the trigger fires.
    pub feedback: bool,
    pub oracle_accuracy: f64,
    pub elicitation: ElicitationConfig,
    pub surrogate: SurrogateConfig,
    pub predict_samples: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            task: SyntheticTask::HiddenLinear { input_dim: 8 },
            rounds: 20,
            pool_size: 15,
            seed: 0,
            feedback: false,
            oracle_accuracy: 0.9,
            elicitation: ElicitationConfig::default(),
            surrogate: SurrogateConfig {
                hidden_width: 16,
                steps: 200,
                ..SurrogateConfig::default()
            },
            predict_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRound {
    pub round: usize,
    pub beta: f64,
    pub best: f64,
    pub selected: f64,
    pub regret: f64,
    /// Some candidate's true utility fell outside its confidence band.
    pub violation: bool,
    pub queried: bool,
    pub reason: Option<QueryReason>,
    pub gain_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRun {
    pub rounds: Vec<SyntheticRound>,
}

impl SyntheticRun {
    pub fn cumulative_regret(&self) -> f64 {
        self.rounds.iter().map(|r| r.regret).sum()
    }

    pub fn queries(&self) -> usize {
        self.rounds.iter().filter(|r| r.queried).count()
    }

    pub fn violation_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.violation).count()
    }

    pub fn regret_csv(&self) -> String {
        let mut out =
            String::from("round,best,selected,regret,cumulative_regret,queried,violation\n");
        let mut cum = 0.0;
        for r in &self.rounds {
            cum += r.regret;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.round, r.best, r.selected, r.regret, cum, r.queried as u8, r.violation as u8
            ));
        }
        out
    }
}

fn normal_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Per-round truth for the linearized task.
fn linearized_truth(posterior: &VariationalPosterior, inputs: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let arch = posterior.architecture;
    let stds = posterior.stds();
    let mut rng = rng_from_seed(seed);
    let w: Vec<f64> = stds
        .iter()
        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    inputs
        .iter()
        .map(|x| {
            let mut grad = vec![0.0; arch.n_params()];
            let base = arch.accumulate_gradient(&posterior.means, x, 1.0, &mut grad);
            let offset: f64 = grad.iter().zip(&w).map(|(g, w)| g * w).sum();
            posterior.standardizer.inverse(base + offset)
        })
        .collect()
}

/// Runs the selection policy for `config.rounds` rounds with a fresh pool of
/// `config.pool_size` candidates per round.
pub fn run_synthetic(config: &SyntheticConfig) -> Result<SyntheticRun, EngineError> {
    config.surrogate.validate()?;
    config.elicitation.validate().map_err(EngineError::Config)?;
    let d = config.task.input_dim();
    let seed = config.seed;
    let hidden_w = normal_vec(
        &mut rng_from_seed(derive_seed(seed, TRUTH_STREAM, 0)),
        d,
        1.0,
    );
    let oracle = SimulatedOracle::new(
        config.oracle_accuracy,
        derive_seed(seed, streams::ORACLE, 0),
    );
    let ops: Vec<FeatureOperation> = (0..config.pool_size)
        .map(|i| FeatureOperation::new(format!("c{i:03}"), "0", "").expect("valid placeholder"))
        .collect();

    let mut history: Vec<Observation> = Vec::new();
    let mut rounds = Vec::with_capacity(config.rounds);
    for t in 1..=config.rounds {
        let mut rng = rng_from_seed(derive_seed(seed, CANDIDATE_STREAM, t as u64));
        let inputs: Vec<Vec<f64>> = (0..config.pool_size)
            .map(|_| normal_vec(&mut rng, d, 1.0 / (d as f64).sqrt()))
            .collect();
        let posterior = surrogate::fit(
            &history,
            d,
            &config.surrogate,
            derive_seed(seed, streams::FIT, t as u64),
            None,
        )?;
        let truth: Vec<f64> = match config.task {
            SyntheticTask::HiddenLinear { .. } => inputs
                .iter()
                .map(|x| x.iter().zip(&hidden_w).map(|(a, b)| a * b).sum())
                .collect(),
            SyntheticTask::Linearized { .. } => linearized_truth(
                &posterior,
                &inputs,
                derive_seed(seed, TRUTH_STREAM, t as u64),
            ),
        };
        let views: Vec<PoolView> = ops
            .iter()
            .zip(&inputs)
            .map(|(op, x)| PoolView {
                op,
                proposal_round: t,
                encoding: x,
            })
            .collect();
        let ctx = PolicyContext {
            round: t,
            posterior: &posterior,
            elicitation: &config.elicitation,
            samples: config.predict_samples,
            seed,
            human_available: config.feedback,
            timeout_secs: 0.0,
        };
        let mut elicit = |q: &crate::oracle::PreferenceQuery, a: usize, b: usize| {
            ElicitOutcome::Answered(PreferenceFeedback {
                z: oracle.answer(q.round, truth[a], truth[b]),
                source: FeedbackSource::Simulated,
                latency_ms: 0,
            })
        };
        let outcome = decide(&ctx, &views, &mut elicit)?;
        let violation = outcome.moments.iter().zip(&truth).any(|(m, g)| {
            let (lo, hi) = (
                surrogate::lcb(m, outcome.beta),
                surrogate::ucb(m, outcome.beta),
            );
            *g < lo || *g > hi
        });
        let best = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let selected = truth[outcome.selected];
        history.push(Observation::new(inputs[outcome.selected].clone(), selected));
        rounds.push(SyntheticRound {
            round: t,
            beta: outcome.beta,
            best,
            selected,
            regret: best - selected,
            violation,
            queried: outcome.decision.queried,
            reason: outcome.decision.verdict.map(|v| v.reason),
            gain_bound: outcome.decision.expected_gain_bound,
        });
    }
    Ok(SyntheticRun { rounds })
}

/// Query cost set to the `quantile` of gain bounds observed when every
/// eligible round queries, over `pilot_seeds`.
pub fn calibrate_gamma_kappa(
    config: &SyntheticConfig,
    pilot_seeds: impl IntoIterator<Item = u64>,
    quantile: f64,
) -> Result<f64, EngineError> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(EngineError::Config(format!(
            "quantile {quantile} outside [0, 1]"
        )));
    }
    let mut bounds = Vec::new();
    for seed in pilot_seeds {
        let mut pilot = config.clone();
        pilot.seed = seed;
        pilot.feedback = true;
        pilot.elicitation.gamma_kappa = 0.0;
        bounds.extend(
            run_synthetic(&pilot)?
                .rounds
                .iter()
                .filter_map(|r| r.gain_bound),
        );
    }
    if bounds.is_empty() {
        return Err(EngineError::Config(
            "pilot runs produced no gain bounds".into(),
        ));
    }
    bounds.sort_by(f64::total_cmp);
    let i = ((quantile * bounds.len() as f64) as usize).min(bounds.len() - 1);
    Ok(bounds[i])
}
