//! The selection loop: pool management, surrogate fit, UCB choice, optional
//! preference query, evaluation and acceptance, with persistence and events.

mod policy;
mod session;
pub mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, SchemaHint, TabularDataset, Task};
use crate::dsl::FeatureOperation;
use crate::encoder::{EncoderConfig, EncoderError};
use crate::generate::GeneratedTable;
use crate::learner::{LearnerError, LearnerSpec, RegressionMetric, UtilityResult};
use crate::oracle::{FeedbackSource, OracleSpec, PreferenceQuery, DEFAULT_TIMEOUT_SECS};
use crate::proposer::{ProposerBackend, ProposerError, DEFAULT_PROPOSALS_PER_ROUND};
use crate::selection::{ElicitationConfig, Preference, RoundDecision, SelectionError};
use crate::surrogate::{SurrogateConfig, SurrogateError};

pub use policy::{decide, PolicyContext, PolicyOutcome, PoolView};
pub use session::{
    read_round_log, read_timings, replay_hash, AcceptedColumn, EventSink, PoolMember, Session,
    SessionSnapshot, SessionSummary,
};

pub const ROUND_LOG_VERSION: u32 = 1;
pub const DEFAULT_BUDGET: usize = 50;

/// Sub-seed streams derived from the session seed.
pub(crate) mod streams {
    pub const FIT: u64 = 1;
    pub const PREDICT: u64 = 2;
    pub const UPDATE: u64 = 3;
    pub const PROPOSE: u64 = 4;
    pub const LEARNER: u64 = 5;
    pub const ORACLE: u64 = 6;
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt round log {path}, line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("resume failed: {0}")]
    Resume(String),
}

impl EngineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EngineError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        target: Option<String>,
        #[serde(default)]
        task: Option<Task>,
        #[serde(default)]
        metadata: String,
    },
    Generated {
        table: GeneratedTable,
    },
}

impl DataSource {
    pub fn load(&self) -> Result<TabularDataset, EngineError> {
        match self {
            DataSource::Csv {
                path,
                target,
                task,
                metadata,
            } => {
                let hint = SchemaHint {
                    target: target.clone(),
                    task: *task,
                    metadata: metadata.clone(),
                };
                Ok(crate::dataset::load_table(path, Some(&hint))?)
            }
            DataSource::Generated { table } => Ok(table.build()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub data: DataSource,
    pub split_ratio: f64,
    /// Seed for the train/validation split.
    pub split_seed: u64,
    /// Base seed for every other random stream.
    pub seed: u64,
    pub budget: usize,
    pub proposals_per_round: usize,
    pub elicitation: ElicitationConfig,
    pub surrogate: SurrogateConfig,
    pub learner: LearnerSpec,
    pub encoder: EncoderConfig,
    pub proposer: ProposerBackend,
    pub oracle: OracleSpec,
    pub oracle_timeout_secs: f64,
    pub output_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Generated {
                table: GeneratedTable::Interaction { rows: 400, seed: 0 },
            },
            split_ratio: 0.7,
            split_seed: 0,
            seed: 0,
            budget: DEFAULT_BUDGET,
            proposals_per_round: DEFAULT_PROPOSALS_PER_ROUND,
            elicitation: ElicitationConfig::default(),
            surrogate: SurrogateConfig::default(),
            learner: LearnerSpec::default(),
            encoder: EncoderConfig::default(),
            proposer: ProposerBackend::ScriptedMock {
                script: "fixtures/basic.json".into(),
            },
            oracle: OracleSpec::None,
            oracle_timeout_secs: DEFAULT_TIMEOUT_SECS,
            output_dir: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if self.proposals_per_round == 0 {
            return bad("proposals_per_round must be at least 1".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if !(self.oracle_timeout_secs >= 0.0) {
            return bad("oracle_timeout_secs must be non-negative".into());
        }
        self.elicitation.validate().map_err(EngineError::Config)?;
        self.surrogate.validate()?;
        self.learner.validate()?;
        self.oracle.validate().map_err(EngineError::Config)?;
        Ok(())
    }

    pub fn human_available(&self) -> bool {
        self.oracle.human_available()
    }

    /// Metric label shown to the proposer.
    pub fn metric_label(&self, task: Task) -> &'static str {
        match (task, self.learner.regression_metric) {
            (Task::Classification, _) => "ROC_AUC",
            (Task::Regression, RegressionMetric::NegNrmse) => "negative NRMSE",
            (Task::Regression, RegressionMetric::NegMse) => "negative MSE",
        }
    }
}

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub version: u32,
    pub round: usize,
    /// |S_t| after merging fresh proposals into the carryover.
    pub pool_size: usize,
    /// Proposals that entered the pool this round.
    pub fresh: Vec<FeatureOperation>,
    /// Canonical expressions of proposals dropped as duplicates of pool members.
    pub dedup_dropped: Vec<String>,
    pub rejected_proposals: usize,
    /// Path of the proposal transcript, relative to the session directory.
    pub transcript: Option<String>,
    pub decision: Option<RoundDecision>,
    pub selected_operation: Option<FeatureOperation>,
    pub utility: Option<UtilityResult>,
    pub accepted: bool,
    /// Validation score of the pipeline after this round.
    pub baseline_score: f64,
    pub best_score: f64,
    /// No candidate was available this round.
    pub skipped: bool,
}

impl RoundRecord {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(u) = &self.utility {
            if self.accepted != (u.g > 0.0) {
                return Err(format!(
                    "round {}: accepted flag disagrees with g",
                    self.round
                ));
            }
        } else if self.accepted {
            return Err(format!("round {}: accepted without evaluation", self.round));
        }
        if let Some(d) = &self.decision {
            d.validate()
                .map_err(|e| format!("round {}: {e}", self.round))?;
        }
        Ok(())
    }
}

/// Wall-clock milliseconds per stage of one round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub round: usize,
    pub propose_ms: f64,
    pub encode_ms: f64,
    pub fit_ms: f64,
    pub select_ms: f64,
    pub query_ms: f64,
    pub update_ms: f64,
    pub evaluate_ms: f64,
    pub total_ms: f64,
}

/// Stream events. Serialized with an `event` tag whose values double as
/// the server-sent event names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum SessionEvent {
    RoundStarted {
        round: usize,
        budget: usize,
    },
    QueryIssued {
        query: PreferenceQuery,
    },
    FeedbackReceived {
        round: usize,
        z: Preference,
        source: FeedbackSource,
    },
    RoundFinished {
        record: Box<RoundRecord>,
        timings: StageTimings,
    },
    SessionDone {
        rounds: usize,
        best_score: f64,
        reason: String,
    },
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self {
            SessionEvent::RoundStarted { .. } => "round-started",
            SessionEvent::QueryIssued { .. } => "query-issued",
            SessionEvent::FeedbackReceived { .. } => "feedback-received",
            SessionEvent::RoundFinished { .. } => "round-finished",
            SessionEvent::SessionDone { .. } => "session-done",
        }
    }
}
