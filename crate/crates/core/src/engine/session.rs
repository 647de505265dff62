use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::dataset::{split, SplitPair};
use crate::dsl::{evaluate, FeatureOperation};
use crate::encoder::Encoder;
use crate::learner::{baseline_score, utility, UtilityEvaluation};
use crate::oracle::{ElicitOutcome, OracleSpec, PreferenceOracle, SimulatedOracle, TerminalOracle};
use crate::proposer::{HistoryLine, ProposalRequest, Proposer};
use crate::surrogate::{self, Observation, VariationalPosterior};
use crate::util::{derive_seed, sha256_hex};

use super::policy::{decide, PolicyContext, PoolView};
use super::{
    streams, EngineError, RoundRecord, SessionConfig, SessionEvent, StageTimings, ROUND_LOG_VERSION,
};

pub type EventSink = Box<dyn FnMut(&SessionEvent) + Send>;

const CONFIG_FILE: &str = "config.json";
const ROUNDS_FILE: &str = "rounds.jsonl";
const TIMINGS_FILE: &str = "timings.jsonl";
const POSTERIOR_FILE: &str = "posterior.json";
const MANIFEST_FILE: &str = "manifest.json";
const TRANSCRIPT_DIR: &str = "transcripts";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub operation: FeatureOperation,
    pub proposal_round: usize,
}

struct PoolEntry {
    member: PoolMember,
    encoding: Vec<f64>,
}

/// A column added to both splits by an accepted operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedColumn {
    pub round: usize,
    pub column: String,
    pub expression: String,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    original_columns: Vec<String>,
    accepted: Vec<AcceptedColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub rounds: usize,
    pub initial_score: f64,
    pub final_score: f64,
    pub accepted: Vec<AcceptedColumn>,
    pub queries: usize,
    pub reason: String,
}

/// Read-only view for observers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub round: usize,
    pub budget: usize,
    pub done: bool,
    pub initial_score: f64,
    pub score: f64,
    /// (round, best score so far); round 0 is the initial pipeline.
    pub trajectory: Vec<(usize, f64)>,
    pub records: Vec<RoundRecord>,
    pub pool: Vec<PoolMember>,
    pub accepted: Vec<AcceptedColumn>,
}

pub struct Session {
    config: SessionConfig,
    original_columns: Vec<String>,
    split: SplitPair,
    initial_score: f64,
    baseline: f64,
    pool: Vec<PoolEntry>,
    history: Vec<Observation>,
    records: Vec<RoundRecord>,
    timings: Vec<StageTimings>,
    accepted: Vec<AcceptedColumn>,
    last_posterior: Option<VariationalPosterior>,
    proposer: Proposer,
    encoder: Encoder,
    oracle: Option<Box<dyn PreferenceOracle>>,
    events: Option<EventSink>,
    abort: Arc<AtomicBool>,
    finished: Option<String>,
}

fn learner_seed(config: &SessionConfig) -> u64 {
    derive_seed(config.seed, streams::LEARNER, 0)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl Session {
    /// Session over the configured data source; the oracle is built from the
    /// configured spec (a `session` oracle must be supplied with
    /// [`Session::with_oracle`]).
    pub fn from_config(config: SessionConfig) -> Result<Self, EngineError> {
        let oracle = build_oracle(&config)?;
        Self::with_oracle(config, oracle)
    }

    pub fn with_oracle(
        config: SessionConfig,
        oracle: Option<Box<dyn PreferenceOracle>>,
    ) -> Result<Self, EngineError> {
        let data = config.data.load()?;
        let session = Self::build(config, data, oracle)?;
        if let Some(dir) = session.config.output_dir.clone() {
            session.init_output(&dir)?;
        }
        Ok(session)
    }

    fn build(
        config: SessionConfig,
        data: crate::dataset::TabularDataset,
        oracle: Option<Box<dyn PreferenceOracle>>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if config.human_available() && oracle.is_none() {
            return Err(EngineError::Config(format!(
                "oracle {:?} requires a feedback source",
                config.oracle
            )));
        }
        let original_columns: Vec<String> =
            data.feature_schema().into_iter().map(|(n, _)| n).collect();
        let split = split(&data, config.split_ratio, config.split_seed)?;
        let initial_score = baseline_score(&split, &config.learner, learner_seed(&config))?;
        let proposer = Proposer::new(&config.proposer)?;
        let encoder = Encoder::new(config.encoder.clone());
        info!(
            "session ready: {} train / {} val rows, initial score {initial_score:.4}",
            split.train.n_rows(),
            split.val.n_rows()
        );
        Ok(Self {
            original_columns,
            split,
            initial_score,
            baseline: initial_score,
            pool: Vec::new(),
            history: Vec::new(),
            records: Vec::new(),
            timings: Vec::new(),
            accepted: Vec::new(),
            last_posterior: None,
            proposer,
            encoder,
            oracle: if config.human_available() {
                oracle
            } else {
                None
            },
            events: None,
            abort: Arc::new(AtomicBool::new(false)),
            finished: None,
            config,
        })
    }

    pub fn set_event_sink(&mut self, sink: EventSink) {
        self.events = Some(sink);
    }

    /// Setting the flag stops the session before its next round.
    pub fn abort_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.abort)
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn timings(&self) -> &[StageTimings] {
        &self.timings
    }

    pub fn split(&self) -> &SplitPair {
        &self.split
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn initial_score(&self) -> f64 {
        self.initial_score
    }

    pub fn accepted(&self) -> &[AcceptedColumn] {
        &self.accepted
    }

    pub fn pool(&self) -> Vec<PoolMember> {
        self.pool.iter().map(|e| e.member.clone()).collect()
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.finished.is_some() || self.records.len() >= self.config.budget
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let mut trajectory = vec![(0, self.initial_score)];
        trajectory.extend(self.records.iter().map(|r| (r.round, r.best_score)));
        SessionSnapshot {
            round: self.records.len(),
            budget: self.config.budget,
            done: self.is_done(),
            initial_score: self.initial_score,
            score: self.baseline,
            trajectory,
            records: self.records.clone(),
            pool: self.pool(),
            accepted: self.accepted.clone(),
        }
    }

    fn emit(&mut self, event: SessionEvent) {
        if let Some(sink) = self.events.as_mut() {
            sink(&event);
        }
    }

    fn encode(&self, op: &FeatureOperation) -> Result<Vec<f64>, EngineError> {
        Ok(self.encoder.encode(op, &self.original_columns)?.combined)
    }

    fn input_dim(&self) -> usize {
        self.config.encoder.dim + self.original_columns.len()
    }

    /// Runs rounds until the budget is spent or the session is aborted.
    pub fn run(&mut self) -> Result<SessionSummary, EngineError> {
        while self.step()?.is_some() {}
        let reason = self
            .finished
            .clone()
            .unwrap_or_else(|| "budget exhausted".into());
        self.finish(&reason)?;
        Ok(self.summary(reason))
    }

    pub fn summary(&self, reason: String) -> SessionSummary {
        SessionSummary {
            rounds: self.records.len(),
            initial_score: self.initial_score,
            final_score: self.baseline,
            accepted: self.accepted.clone(),
            queries: self
                .records
                .iter()
                .filter(|r| r.decision.as_ref().is_some_and(|d| d.queried))
                .count(),
            reason,
        }
    }

    fn finish(&mut self, reason: &str) -> Result<(), EngineError> {
        if let Some(dir) = self.config.output_dir.clone() {
            for (name, ds) in [
                ("final_train.csv", &self.split.train),
                ("final_val.csv", &self.split.val),
            ] {
                let path = dir.join(name);
                let file = File::create(&path).map_err(|e| EngineError::io(&path, e))?;
                ds.write_csv(std::io::BufWriter::new(file))?;
            }
        }
        self.finished = Some(reason.to_string());
        let event = SessionEvent::SessionDone {
            rounds: self.records.len(),
            best_score: self.baseline,
            reason: reason.to_string(),
        };
        self.emit(event);
        Ok(())
    }

    /// Executes one round. Returns `None` once the budget is spent or the
    /// session was aborted.
    pub fn step(&mut self) -> Result<Option<RoundRecord>, EngineError> {
        if self.is_done() {
            return Ok(None);
        }
        if self.abort.load(Ordering::SeqCst) {
            self.finished = Some("aborted".into());
            return Ok(None);
        }
        let round_start = Instant::now();
        let t = self.records.len() + 1;
        let seed = self.config.seed;
        let mut timings = StageTimings {
            round: t,
            ..StageTimings::default()
        };
        self.emit(SessionEvent::RoundStarted {
            round: t,
            budget: self.config.budget,
        });

        // Propose.
        let stage = Instant::now();
        let history_lines: Vec<HistoryLine> = self
            .records
            .iter()
            .filter_map(|r| {
                let u = r.utility.as_ref()?;
                let op = r.selected_operation.as_ref()?;
                Some(HistoryLine {
                    round: r.round,
                    name: op.name.clone(),
                    expression: op.canonical(),
                    g: u.g,
                    accepted: r.accepted,
                })
            })
            .collect();
        let request = ProposalRequest::for_dataset(
            &self.split.train,
            self.config.metric_label(self.split.train.task()),
            history_lines,
            self.config.budget - t + 1,
            self.config.proposals_per_round,
        );
        let proposal = self
            .proposer
            .propose(&request, derive_seed(seed, streams::PROPOSE, t as u64))?;
        timings.propose_ms = ms(stage.elapsed());
        let transcript = match self.config.output_dir.clone() {
            Some(dir) => {
                let rel = format!("{TRANSCRIPT_DIR}/round_{t:04}.json");
                let text = serde_json::to_string_pretty(&proposal.transcript)
                    .expect("transcript serializes");
                let path = dir.join(&rel);
                fs::write(&path, text).map_err(|e| EngineError::io(&path, e))?;
                Some(rel)
            }
            None => None,
        };

        // Merge into the pool.
        let stage = Instant::now();
        let mut fresh = Vec::new();
        let mut dedup_dropped = Vec::new();
        for op in proposal.operations {
            let canonical = op.canonical();
            if self
                .pool
                .iter()
                .any(|e| e.member.operation.canonical() == canonical)
            {
                info!("round {t}: dropping duplicate proposal {canonical}");
                dedup_dropped.push(canonical);
                continue;
            }
            let encoding = self.encode(&op)?;
            fresh.push(op.clone());
            self.pool.push(PoolEntry {
                member: PoolMember {
                    operation: op,
                    proposal_round: t,
                },
                encoding,
            });
        }
        timings.encode_ms = ms(stage.elapsed());
        let mut record = RoundRecord {
            version: ROUND_LOG_VERSION,
            round: t,
            pool_size: self.pool.len(),
            fresh,
            dedup_dropped,
            rejected_proposals: proposal.transcript.rejections.len(),
            transcript,
            decision: None,
            selected_operation: None,
            utility: None,
            accepted: false,
            baseline_score: self.baseline,
            best_score: self.baseline,
            skipped: false,
        };

        if self.pool.is_empty() {
            warn!("round {t}: empty pool and no proposals; skipping");
            record.skipped = true;
            timings.total_ms = ms(round_start.elapsed());
            self.commit(record.clone(), timings)?;
            return Ok(Some(record));
        }

        // Fit.
        let stage = Instant::now();
        let posterior = surrogate::fit(
            &self.history,
            self.input_dim(),
            &self.config.surrogate,
            derive_seed(seed, streams::FIT, t as u64),
            self.last_posterior.as_ref(),
        )?;
        timings.fit_ms = ms(stage.elapsed());

        // Select, query, update.
        let ctx = PolicyContext {
            round: t,
            posterior: &posterior,
            elicitation: &self.config.elicitation,
            samples: self.config.surrogate.mc_samples_predict,
            seed,
            human_available: self.oracle.is_some(),
            timeout_secs: self.config.oracle_timeout_secs,
        };
        let views: Vec<PoolView> = self
            .pool
            .iter()
            .map(|e| PoolView {
                op: &e.member.operation,
                proposal_round: e.member.proposal_round,
                encoding: &e.encoding,
            })
            .collect();
        let mut evaluated: HashMap<usize, UtilityEvaluation> = HashMap::new();
        let mut truth_error = None;
        let outcome = {
            let oracle = &mut self.oracle;
            let events = &mut self.events;
            let split = &self.split;
            let learner = &self.config.learner;
            let baseline = self.baseline;
            let lseed = learner_seed(&self.config);
            let mut elicit = |q: &crate::oracle::PreferenceQuery, a: usize, b: usize| {
                let Some(oracle) = oracle.as_mut() else {
                    return ElicitOutcome::TimedOut;
                };
                let truth = if oracle.needs_truth() {
                    let mut g = [0.0; 2];
                    for (slot, idx) in [a, b].into_iter().enumerate() {
                        if let std::collections::hash_map::Entry::Vacant(entry) =
                            evaluated.entry(idx)
                        {
                            match utility(views[idx].op, split, learner, baseline, lseed) {
                                Ok(u) => {
                                    entry.insert(u);
                                }
                                Err(e) => {
                                    truth_error = Some(e);
                                    return ElicitOutcome::TimedOut;
                                }
                            }
                        }
                        g[slot] = evaluated[&idx].result.g;
                    }
                    Some((g[0], g[1]))
                } else {
                    None
                };
                let issued = SessionEvent::QueryIssued { query: q.clone() };
                if let Some(sink) = events.as_mut() {
                    sink(&issued);
                }
                let answer = oracle.elicit(q, truth);
                if let (ElicitOutcome::Answered(f), Some(sink)) = (&answer, events.as_mut()) {
                    sink(&SessionEvent::FeedbackReceived {
                        round: q.round,
                        z: f.z,
                        source: f.source,
                    });
                }
                answer
            };
            decide(&ctx, &views, &mut elicit)?
        };
        if let Some(e) = truth_error {
            return Err(e.into());
        }
        timings.select_ms = ms(outcome.select_time);
        timings.query_ms = ms(outcome.query_time);
        timings.update_ms = ms(outcome.update_time);
        if outcome.aborted {
            self.finished = Some("aborted".into());
            return Ok(None);
        }

        // Evaluate and accept.
        let stage = Instant::now();
        let chosen = outcome.selected;
        let evaluation = match evaluated.remove(&chosen) {
            Some(u) => u,
            None => utility(
                &self.pool[chosen].member.operation,
                &self.split,
                &self.config.learner,
                self.baseline,
                learner_seed(&self.config),
            )?,
        };
        timings.evaluate_ms = ms(stage.elapsed());
        let entry = self.pool.remove(chosen);
        let g = evaluation.result.g;
        self.history.push(Observation::new(entry.encoding, g));
        record.accepted = g > 0.0;
        if record.accepted {
            self.split = evaluation.augmented;
            self.baseline = evaluation.result.score_after;
            self.accepted.push(AcceptedColumn {
                round: t,
                column: evaluation.result.column.clone(),
                expression: entry.member.operation.canonical(),
                g,
            });
        }
        record.decision = Some(outcome.decision);
        record.selected_operation = Some(entry.member.operation);
        record.utility = Some(evaluation.result);
        record.baseline_score = self.baseline;
        record.best_score = self.baseline;
        self.last_posterior = Some(posterior);
        timings.total_ms = ms(round_start.elapsed());
        self.commit(record.clone(), timings)?;
        Ok(Some(record))
    }

    fn commit(&mut self, record: RoundRecord, timings: StageTimings) -> Result<(), EngineError> {
        debug_assert!(record.validate().is_ok(), "{:?}", record.validate());
        if let Some(dir) = self.config.output_dir.clone() {
            append_line(&dir.join(ROUNDS_FILE), &record)?;
            append_line(&dir.join(TIMINGS_FILE), &timings)?;
            self.write_state_files(&dir)?;
        }
        self.records.push(record.clone());
        self.timings.push(timings);
        self.emit(SessionEvent::RoundFinished {
            record: Box::new(record),
            timings,
        });
        Ok(())
    }

    fn init_output(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir.join(TRANSCRIPT_DIR)).map_err(|e| EngineError::io(dir, e))?;
        write_file(
            &dir.join(CONFIG_FILE),
            &serde_json::to_string_pretty(&self.config).expect("config serializes"),
        )?;
        write_file(&dir.join(ROUNDS_FILE), "")?;
        write_file(&dir.join(TIMINGS_FILE), "")?;
        self.write_state_files(dir)
    }

    fn write_state_files(&self, dir: &Path) -> Result<(), EngineError> {
        let manifest = Manifest {
            version: ROUND_LOG_VERSION,
            original_columns: self.original_columns.clone(),
            accepted: self.accepted.clone(),
        };
        write_file(
            &dir.join(MANIFEST_FILE),
            &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        if let Some(p) = &self.last_posterior {
            write_file(&dir.join(POSTERIOR_FILE), &p.to_json())?;
        }
        Ok(())
    }

    /// Writes every persisted file from the in-memory state.
    pub fn persist(&self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir).map_err(|e| EngineError::io(dir, e))?;
        write_file(
            &dir.join(CONFIG_FILE),
            &serde_json::to_string_pretty(&self.config).expect("config serializes"),
        )?;
        write_file(&dir.join(ROUNDS_FILE), &jsonl(&self.records))?;
        write_file(&dir.join(TIMINGS_FILE), &jsonl(&self.timings))?;
        self.write_state_files(dir)
    }

    /// Rebuilds a session from its directory by replaying the round log. A
    /// truncated final line is discarded and the log rewritten without it.
    /// Further rounds are appended to the same directory.
    pub fn resume(
        dir: &Path,
        oracle: Option<Box<dyn PreferenceOracle>>,
    ) -> Result<Self, EngineError> {
        let config_path = dir.join(CONFIG_FILE);
        let text =
            fs::read_to_string(&config_path).map_err(|e| EngineError::io(&config_path, e))?;
        let mut config: SessionConfig = serde_json::from_str(&text)
            .map_err(|e| EngineError::Resume(format!("{}: {e}", config_path.display())))?;
        config.output_dir = Some(dir.to_path_buf());
        let oracle = match oracle {
            Some(o) => Some(o),
            None => build_oracle(&config)?,
        };
        let records = read_round_log(&dir.join(ROUNDS_FILE))?;
        let mut timings = read_timings(&dir.join(TIMINGS_FILE)).unwrap_or_default();
        timings.truncate(records.len());

        let data = config.data.load()?;
        let mut session = Self::build(config, data, oracle)?;
        for record in records {
            session.replay(&record)?;
            session.records.push(record);
        }
        session.timings = timings;
        if session.history.is_empty() {
            session.last_posterior = None;
        } else {
            let path = dir.join(POSTERIOR_FILE);
            let text = fs::read_to_string(&path).map_err(|e| EngineError::io(&path, e))?;
            session.last_posterior = Some(VariationalPosterior::from_json(&text)?);
        }
        write_file(&dir.join(ROUNDS_FILE), &jsonl(&session.records))?;
        write_file(&dir.join(TIMINGS_FILE), &jsonl(&session.timings))?;
        Ok(session)
    }

    fn replay(&mut self, record: &RoundRecord) -> Result<(), EngineError> {
        if record.round != self.records.len() + 1 {
            return Err(EngineError::Resume(format!(
                "round {} out of sequence",
                record.round
            )));
        }
        self.proposer.advance(1);
        for op in &record.fresh {
            let encoding = self.encode(op)?;
            self.pool.push(PoolEntry {
                member: PoolMember {
                    operation: op.clone(),
                    proposal_round: record.round,
                },
                encoding,
            });
        }
        let (Some(op), Some(u)) = (&record.selected_operation, &record.utility) else {
            return Ok(());
        };
        let canonical = op.canonical();
        let index = self
            .pool
            .iter()
            .position(|e| e.member.operation.canonical() == canonical)
            .ok_or_else(|| {
                EngineError::Resume(format!(
                    "round {}: selected operation {canonical} not in pool",
                    record.round
                ))
            })?;
        let entry = self.pool.remove(index);
        self.history.push(Observation::new(entry.encoding, u.g));
        if record.accepted {
            let train = evaluate(&op.expression, &self.split.train)
                .map_err(|e| EngineError::Resume(e.to_string()))?;
            let val = evaluate(&op.expression, &self.split.val)
                .map_err(|e| EngineError::Resume(e.to_string()))?;
            self.split = self
                .split
                .append_column(&op.name, &train.values, &val.values)?;
            self.accepted.push(AcceptedColumn {
                round: record.round,
                column: u.column.clone(),
                expression: canonical,
                g: u.g,
            });
        }
        self.baseline = record.baseline_score;
        Ok(())
    }
}

fn build_oracle(config: &SessionConfig) -> Result<Option<Box<dyn PreferenceOracle>>, EngineError> {
    Ok(match &config.oracle {
        OracleSpec::None => None,
        OracleSpec::Simulated { accuracy } => Some(Box::new(SimulatedOracle::new(
            *accuracy,
            derive_seed(config.seed, streams::ORACLE, 0),
        ))),
        OracleSpec::Terminal => Some(Box::new(TerminalOracle::stdin())),
        OracleSpec::Session => {
            return Err(EngineError::Config(
                "a session oracle needs a channel supplied by the caller".into(),
            ))
        }
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), EngineError> {
    fs::write(path, text).map_err(|e| EngineError::io(path, e))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("record serializes") + "\n")
        .collect()
}

fn append_line<T: Serialize>(path: &Path, item: &T) -> Result<(), EngineError> {
    let mut file = OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| EngineError::io(path, e))?;
    let line = serde_json::to_string(item).expect("record serializes") + "\n";
    file.write_all(line.as_bytes())
        .map_err(|e| EngineError::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EngineError> {
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    // The final segment lacks a newline: either empty or a partial write.
    if let Some(last) = lines.pop() {
        if !last.is_empty() {
            warn!("{}: dropping truncated final line", path.display());
        }
    }
    lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| EngineError::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Parses a round log, dropping a truncated final line.
pub fn read_round_log(path: &Path) -> Result<Vec<RoundRecord>, EngineError> {
    let records: Vec<RoundRecord> = read_jsonl(path)?;
    for (i, r) in records.iter().enumerate() {
        if r.version != ROUND_LOG_VERSION {
            return Err(EngineError::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("unsupported record version {}", r.version),
            });
        }
        if r.round != i + 1 {
            return Err(EngineError::CorruptLog {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected round {}, found {}", i + 1, r.round),
            });
        }
    }
    Ok(records)
}

pub fn read_timings(path: &Path) -> Result<Vec<StageTimings>, EngineError> {
    read_jsonl(path)
}

/// SHA-256 of a session's round log.
pub fn replay_hash(dir: &Path) -> Result<String, EngineError> {
    let path: PathBuf = dir.join(ROUNDS_FILE);
    let bytes = fs::read(&path).map_err(|e| EngineError::io(&path, e))?;
    Ok(sha256_hex(&bytes))
}
