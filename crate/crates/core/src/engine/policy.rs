use std::time::{Duration, Instant};

use crate::dsl::FeatureOperation;
use crate::oracle::{ElicitOutcome, PreferenceQuery, QueryCandidate};
use crate::selection::{
    expected_gain_bound, select_final, select_first, select_second, should_query,
    update_with_preference, CandidateRef, CandidateScore, Choice, ElicitationConfig, RoundDecision,
    SelectionError,
};
use crate::surrogate::{self, beta, PredictiveMoments, VariationalPosterior};
use crate::util::derive_seed;

use super::streams;

/// A pool member as the policy sees it.
#[derive(Debug, Clone, Copy)]
pub struct PoolView<'a> {
    pub op: &'a FeatureOperation,
    pub proposal_round: usize,
    pub encoding: &'a [f64],
}

pub struct PolicyContext<'a> {
    pub round: usize,
    pub posterior: &'a VariationalPosterior,
    pub elicitation: &'a ElicitationConfig,
    pub samples: usize,
    pub seed: u64,
    pub human_available: bool,
    pub timeout_secs: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub decision: RoundDecision,
    pub index_a: usize,
    pub index_b: Option<usize>,
    pub selected: usize,
    pub beta: f64,
    pub moments: Vec<PredictiveMoments>,
    pub updated: Option<VariationalPosterior>,
    /// The feedback source was closed while waiting.
    pub aborted: bool,
    pub select_time: Duration,
    pub query_time: Duration,
    pub update_time: Duration,
}

fn candidate_ref(v: &PoolView) -> CandidateRef {
    CandidateRef {
        name: v.op.name.clone(),
        expression: v.op.canonical(),
        proposal_round: v.proposal_round,
    }
}

fn query_candidate(v: &PoolView, m: &PredictiveMoments, beta: f64) -> QueryCandidate {
    QueryCandidate {
        name: v.op.name.clone(),
        expression: v.op.canonical(),
        explanation: v.op.explanation.clone(),
        mu: m.mu,
        sigma: m.sigma,
        ucb: surrogate::ucb(m, beta),
        lcb: surrogate::lcb(m, beta),
    }
}

/// One round of the selection policy over a non-empty pool. `elicit` is
/// called with the query and the pool indices of both candidates.
pub fn decide(
    ctx: &PolicyContext,
    pool: &[PoolView],
    elicit: &mut dyn FnMut(&PreferenceQuery, usize, usize) -> ElicitOutcome,
) -> Result<PolicyOutcome, SelectionError> {
    let started = Instant::now();
    let t = ctx.round;
    let b_t = beta(t, pool.len(), ctx.elicitation.delta);
    let predict_seed = derive_seed(ctx.seed, streams::PREDICT, t as u64);
    let inputs: Vec<&[f64]> = pool.iter().map(|v| v.encoding).collect();
    let moments = surrogate::predict_batch(ctx.posterior, &inputs, ctx.samples, predict_seed)?;
    let scores: Vec<CandidateScore> = pool
        .iter()
        .zip(&moments)
        .map(|(v, m)| CandidateScore {
            name: v.op.name.clone(),
            proposal_round: v.proposal_round,
            moments: *m,
        })
        .collect();
    let a = select_first(&scores, b_t)?;
    let b = if ctx.human_available {
        select_second(&scores, b_t, a)
    } else {
        None
    };
    let mut decision = RoundDecision {
        beta: b_t,
        e_a: candidate_ref(&pool[a]),
        moments_a: moments[a],
        e_b: b.map(|b| candidate_ref(&pool[b])),
        moments_b: b.map(|b| moments[b]),
        verdict: None,
        expected_gain_bound: None,
        queried: false,
        feedback: None,
        timed_out: false,
        moments_a_after: None,
        moments_b_after: None,
        selected: Choice::A,
    };
    let mut outcome = PolicyOutcome {
        decision: decision.clone(),
        index_a: a,
        index_b: b,
        selected: a,
        beta: b_t,
        moments: moments.clone(),
        updated: None,
        aborted: false,
        select_time: started.elapsed(),
        query_time: Duration::ZERO,
        update_time: Duration::ZERO,
    };
    if let Some(b) = b {
        let verdict = should_query(&moments[a], &moments[b], b_t, ctx.elicitation);
        decision.verdict = Some(verdict);
        decision.expected_gain_bound = Some(expected_gain_bound(&moments[a], &moments[b], b_t));
        if verdict.query {
            decision.queried = true;
            let query = PreferenceQuery {
                round: t,
                a: query_candidate(&pool[a], &moments[a], b_t),
                b: query_candidate(&pool[b], &moments[b], b_t),
                beta: b_t,
                timeout_secs: ctx.timeout_secs,
            };
            let asked = Instant::now();
            let answer = elicit(&query, a, b);
            outcome.query_time = asked.elapsed();
            match answer {
                ElicitOutcome::Answered(feedback) => {
                    let updating = Instant::now();
                    decision.feedback = Some(feedback.z);
                    let q2 = update_with_preference(
                        ctx.posterior,
                        pool[a].encoding,
                        pool[b].encoding,
                        feedback.z,
                        ctx.elicitation,
                        derive_seed(ctx.seed, streams::UPDATE, t as u64),
                    )?;
                    let fin = select_final(
                        &q2,
                        pool[a].encoding,
                        pool[b].encoding,
                        b_t,
                        ctx.samples,
                        predict_seed,
                    )?;
                    decision.moments_a_after = Some(fin.moments_a);
                    decision.moments_b_after = Some(fin.moments_b);
                    decision.selected = fin.choice;
                    if fin.choice == Choice::B {
                        outcome.selected = b;
                    }
                    outcome.updated = Some(q2);
                    outcome.update_time = updating.elapsed();
                }
                ElicitOutcome::TimedOut => decision.timed_out = true,
                ElicitOutcome::Aborted => {
                    decision.timed_out = true;
                    outcome.aborted = true;
                }
            }
        }
    }
    outcome.decision = decision;
    Ok(outcome)
}
