//! Sources of pairwise preference feedback.

use std::io::{BufRead, Write};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::selection::Preference;
use crate::util::{derive_seed, rng_from_seed};

pub const DEFAULT_TIMEOUT_SECS: f64 = 120.0;
const ORACLE_STREAM: u64 = 0x0AC1E;

/// One side of a pairwise query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCandidate {
    pub name: String,
    pub expression: String,
    pub explanation: String,
    pub mu: f64,
    pub sigma: f64,
    pub ucb: f64,
    pub lcb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceQuery {
    pub round: usize,
    pub a: QueryCandidate,
    pub b: QueryCandidate,
    pub beta: f64,
    pub timeout_secs: f64,
}

impl PreferenceQuery {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSource {
    Simulated,
    Terminal,
    Session,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceFeedback {
    pub z: Preference,
    pub source: FeedbackSource,
    /// Excluded from round logs so they stay reproducible.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElicitOutcome {
    Answered(PreferenceFeedback),
    TimedOut,
    /// The session was closed while waiting.
    Aborted,
}

pub trait PreferenceOracle: Send {
    fn source(&self) -> FeedbackSource;

    /// Whether `elicit` needs the candidates' true utilities.
    fn needs_truth(&self) -> bool {
        false
    }

    /// `truth` holds `(g(a), g(b))` when [`Self::needs_truth`] is set.
    fn elicit(&mut self, query: &PreferenceQuery, truth: Option<(f64, f64)>) -> ElicitOutcome;
}

/// Oracle selection as written in configs and on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleSpec {
    None,
    Terminal,
    Session,
    Simulated { accuracy: f64 },
}

impl OracleSpec {
    /// `none`, `terminal`, `session` or `simulated:<accuracy>`.
    pub fn parse(text: &str) -> Result<Self, String> {
        match text {
            "none" => Ok(OracleSpec::None),
            "terminal" => Ok(OracleSpec::Terminal),
            "session" => Ok(OracleSpec::Session),
            "simulated" => Ok(OracleSpec::Simulated { accuracy: 1.0 }),
            other => {
                let p = other
                    .strip_prefix("simulated:")
                    .ok_or_else(|| format!("unknown oracle {other:?}"))?;
                let accuracy: f64 = p.parse().map_err(|_| format!("bad accuracy {p:?}"))?;
                let spec = OracleSpec::Simulated { accuracy };
                spec.validate()?;
                Ok(spec)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let OracleSpec::Simulated { accuracy } = self {
            if !(0.5..=1.0).contains(accuracy) {
                return Err(format!("oracle accuracy {accuracy} outside [0.5, 1]"));
            }
        }
        Ok(())
    }

    pub fn human_available(&self) -> bool {
        *self != OracleSpec::None
    }
}

/// Ground-truth oracle answering correctly with probability `accuracy`.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    pub accuracy: f64,
    pub seed: u64,
}

impl SimulatedOracle {
    pub fn new(accuracy: f64, seed: u64) -> Self {
        Self { accuracy, seed }
    }

    /// One uniform draw `u` per (seed, round). An exact tie answers `A` when
    /// `u < 0.5`; otherwise the correct answer is flipped when `u < 1 − p`.
    pub fn answer(&self, round: usize, g_a: f64, g_b: f64) -> Preference {
        let u: f64 = rng_from_seed(derive_seed(self.seed, ORACLE_STREAM, round as u64)).random();
        if g_a == g_b {
            return if u < 0.5 {
                Preference::A
            } else {
                Preference::B
            };
        }
        let correct = if g_a > g_b {
            Preference::A
        } else {
            Preference::B
        };
        if u < 1.0 - self.accuracy {
            correct.flipped()
        } else {
            correct
        }
    }
}

impl PreferenceOracle for SimulatedOracle {
    fn source(&self) -> FeedbackSource {
        FeedbackSource::Simulated
    }

    fn needs_truth(&self) -> bool {
        true
    }

    fn elicit(&mut self, query: &PreferenceQuery, truth: Option<(f64, f64)>) -> ElicitOutcome {
        let (ga, gb) = truth.expect("simulated oracle needs true utilities");
        ElicitOutcome::Answered(PreferenceFeedback {
            z: self.answer(query.round, ga, gb),
            source: FeedbackSource::Simulated,
            latency_ms: 0,
        })
    }
}

/// Reads `A`/`B` answers line by line from a reader (stdin by default).
pub struct TerminalOracle {
    lines: Receiver<String>,
    out: Box<dyn Write + Send>,
}

impl TerminalOracle {
    pub fn stdin() -> Self {
        Self::from_reader(
            std::io::BufReader::new(std::io::stdin()),
            Box::new(std::io::stderr()),
        )
    }

    pub fn from_reader<R: BufRead + Send + 'static>(reader: R, out: Box<dyn Write + Send>) -> Self {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in reader.lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self { lines: rx, out }
    }

    fn render(&mut self, q: &PreferenceQuery) {
        let mut text = format!("\nRound {}: which operation is more promising?\n", q.round);
        for (label, c) in [("A", &q.a), ("B", &q.b)] {
            text.push_str(&format!(
                "  [{label}] {} = {}\n      {}\n      mu {:.4} +/- {:.4} (UCB {:.4}, LCB {:.4})\n",
                c.name,
                c.expression,
                c.explanation,
                c.mu,
                q.beta.sqrt() * c.sigma,
                c.ucb,
                c.lcb
            ));
        }
        text.push_str(&format!("Answer A or B within {:.0}s: ", q.timeout_secs));
        let _ = self.out.write_all(text.as_bytes());
        let _ = self.out.flush();
    }
}

pub fn parse_answer(line: &str) -> Option<Preference> {
    match line.trim().to_ascii_lowercase().as_str() {
        "a" | "1" | "+1" => Some(Preference::A),
        "b" | "2" | "-1" => Some(Preference::B),
        _ => None,
    }
}

impl PreferenceOracle for TerminalOracle {
    fn source(&self) -> FeedbackSource {
        FeedbackSource::Terminal
    }

    fn elicit(&mut self, query: &PreferenceQuery, _truth: Option<(f64, f64)>) -> ElicitOutcome {
        self.render(query);
        let start = Instant::now();
        let deadline = start + query.timeout();
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(line) => match parse_answer(&line) {
                    Some(z) => {
                        return ElicitOutcome::Answered(PreferenceFeedback {
                            z,
                            source: FeedbackSource::Terminal,
                            latency_ms: start.elapsed().as_millis() as u64,
                        })
                    }
                    None => {
                        let _ = self.out.write_all(b"Please answer A or B: ");
                        let _ = self.out.flush();
                    }
                },
                Err(RecvTimeoutError::Timeout) => return ElicitOutcome::TimedOut,
                Err(RecvTimeoutError::Disconnected) => return ElicitOutcome::Aborted,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackRejection {
    #[error("no query is pending")]
    NoPendingQuery,
    #[error("feedback is for round {got} but the pending query is for round {expected}")]
    RoundMismatch { expected: usize, got: usize },
    #[error("the pending query was already answered")]
    AlreadyAnswered,
    #[error("session is closed")]
    Closed,
}

#[derive(Debug, Default)]
struct Slot {
    pending: Option<PreferenceQuery>,
    answer: Option<Preference>,
    closed: bool,
}

/// Single-slot handoff between a session driver and the feedback endpoint.
#[derive(Debug, Clone, Default)]
pub struct SessionChannel {
    inner: Arc<(Mutex<Slot>, Condvar)>,
}

impl SessionChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> Option<PreferenceQuery> {
        self.inner.0.lock().expect("slot lock").pending.clone()
    }

    /// Delivers an answer for the pending query of `round`.
    pub fn submit(&self, round: usize, z: Preference) -> Result<(), FeedbackRejection> {
        let (lock, cv) = &*self.inner;
        let mut slot = lock.lock().expect("slot lock");
        if slot.closed {
            return Err(FeedbackRejection::Closed);
        }
        let Some(q) = &slot.pending else {
            return Err(FeedbackRejection::NoPendingQuery);
        };
        if q.round != round {
            return Err(FeedbackRejection::RoundMismatch {
                expected: q.round,
                got: round,
            });
        }
        if slot.answer.is_some() {
            return Err(FeedbackRejection::AlreadyAnswered);
        }
        slot.answer = Some(z);
        cv.notify_all();
        Ok(())
    }

    /// Wakes any waiting driver and rejects further feedback.
    pub fn close(&self) {
        let (lock, cv) = &*self.inner;
        lock.lock().expect("slot lock").closed = true;
        cv.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.0.lock().expect("slot lock").closed
    }
}

impl PreferenceOracle for SessionChannel {
    fn source(&self) -> FeedbackSource {
        FeedbackSource::Session
    }

    fn elicit(&mut self, query: &PreferenceQuery, _truth: Option<(f64, f64)>) -> ElicitOutcome {
        let (lock, cv) = &*self.inner;
        let start = Instant::now();
        let deadline = start + query.timeout();
        let mut slot = lock.lock().expect("slot lock");
        if slot.closed {
            return ElicitOutcome::Aborted;
        }
        slot.pending = Some(query.clone());
        slot.answer = None;
        let outcome = loop {
            if slot.closed {
                break ElicitOutcome::Aborted;
            }
            if let Some(z) = slot.answer {
                break ElicitOutcome::Answered(PreferenceFeedback {
                    z,
                    source: FeedbackSource::Session,
                    latency_ms: start.elapsed().as_millis() as u64,
                });
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break ElicitOutcome::TimedOut;
            }
            slot = cv.wait_timeout(slot, left).expect("slot lock").0;
        };
        slot.pending = None;
        slot.answer = None;
        outcome
    }
}
