use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use hilfe_core::engine::synthetic::{
    calibrate_gamma_kappa, run_synthetic, SyntheticConfig, SyntheticRun, SyntheticTask,
};
use hilfe_core::engine::{
    read_round_log, read_timings, replay_hash, DataSource, RoundRecord, Session, SessionConfig,
    SessionEvent, SessionSummary, StageTimings,
};
use hilfe_core::generate::GeneratedTable;
use hilfe_core::learner::LearnerKind;
use hilfe_core::oracle::OracleSpec;
use hilfe_core::proposer::ProposerBackend;
use hilfe_core::selection::ElicitationConfig;
use hilfe_core::surrogate::SurrogateConfig;
use hilfe_server::{AppState, Status};

#[derive(Parser)]
#[command(
    name = "hilfe",
    version,
    about = "Human-in-the-loop feature engineering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch session.
    Run(Box<RunArgs>),
    /// Regret and coverage study on synthetic utilities.
    Synthetic(SyntheticArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Re-render a persisted round log.
    Replay { dir: PathBuf },
    /// Trajectory table and per-stage timings of a persisted run.
    Report { dir: PathBuf },
}

#[derive(Args, Default)]
struct RunArgs {
    /// Base configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset.
    #[arg(long, conflicts_with = "generate")]
    data: Option<PathBuf>,
    /// Built-in table: `interaction:ROWS[:SEED]` or `wide:ROWSxCOLS[:SEED]`.
    #[arg(long)]
    generate: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// classification | regression
    #[arg(long)]
    task: Option<String>,
    /// Dataset description given to the proposer.
    #[arg(long)]
    metadata: Option<String>,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of rounds T.
    #[arg(long)]
    budget: Option<usize>,
    /// Proposals requested per round K.
    #[arg(long)]
    proposals: Option<usize>,

    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma_kappa: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    update_steps: Option<usize>,
    #[arg(long)]
    update_lr: Option<f64>,
    #[arg(long)]
    update_samples: Option<usize>,

    #[arg(long)]
    surrogate_hidden: Option<usize>,
    #[arg(long)]
    obs_noise: Option<f64>,
    #[arg(long)]
    fit_samples: Option<usize>,
    #[arg(long)]
    predict_samples: Option<usize>,
    #[arg(long)]
    fit_steps: Option<usize>,
    #[arg(long)]
    fit_lr: Option<f64>,
    #[arg(long)]
    init_mean_std: Option<f64>,
    #[arg(long)]
    init_std: Option<f64>,
    #[arg(long)]
    warm_start: Option<bool>,

    /// linear | mlp
    #[arg(long)]
    learner: Option<String>,
    #[arg(long)]
    learner_hidden: Option<usize>,
    #[arg(long)]
    learner_l2: Option<f64>,
    #[arg(long)]
    learner_epochs: Option<usize>,
    #[arg(long)]
    learner_lr: Option<f64>,
    #[arg(long)]
    learner_batch: Option<usize>,
    /// neg-nrmse | neg-mse
    #[arg(long)]
    regression_metric: Option<String>,
    #[arg(long)]
    learner_seed: Option<u64>,

    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    embedding_cache: Option<PathBuf>,

    /// `mock:PATH`, `remote` or `remote:MODEL`.
    #[arg(long)]
    proposer: Option<String>,
    /// none | terminal | session | simulated[:ACCURACY]
    #[arg(long)]
    human: Option<String>,
    #[arg(long)]
    oracle_timeout: Option<f64>,
    /// Session directory for logs and final datasets.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Listen address when `--human session`.
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
    /// Suppress per-round progress.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 0.9)]
    oracle_accuracy: f64,
    #[arg(long, default_value_t = 20)]
    rounds: usize,
    #[arg(long, default_value_t = 15)]
    pool: usize,
    /// hidden-linear | linearized
    #[arg(long, default_value = "hidden-linear")]
    task: String,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Query cost, or `auto` to calibrate on pilot seeds.
    #[arg(long, default_value = "auto")]
    gamma_kappa: String,
    /// Pilot quantile used by `--gamma-kappa auto`.
    #[arg(long, default_value_t = 0.75)]
    quantile: f64,
    /// Regret CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Sessions without an output directory persist under this root.
    #[arg(long)]
    output_root: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Synthetic(args) => cmd_synthetic(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Replay { dir } => cmd_replay(&dir),
        Command::Report { dir } => cmd_report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn kebab<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(text.to_string()))
        .map_err(|_| anyhow!("invalid {what} {text:?}"))
}

fn parse_generated(spec: &str) -> Result<GeneratedTable> {
    let parts: Vec<&str> = spec.split(':').collect();
    let seed = match parts.get(2) {
        Some(s) => s.parse().context("generated table seed")?,
        None => 0,
    };
    match (parts[0], parts.get(1)) {
        ("interaction", Some(rows)) => Ok(GeneratedTable::Interaction {
            rows: rows.parse().context("interaction rows")?,
            seed,
        }),
        ("wide", Some(shape)) => {
            let (rows, cols) = shape
                .split_once('x')
                .ok_or_else(|| anyhow!("wide table shape must be ROWSxCOLS"))?;
            Ok(GeneratedTable::Wide {
                rows: rows.parse().context("wide rows")?,
                cols: cols.parse().context("wide cols")?,
                seed,
            })
        }
        _ => bail!("unknown generated table {spec:?}"),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn build_config(a: &RunArgs) -> Result<SessionConfig> {
    let mut c: SessionConfig = match &a.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SessionConfig::default(),
    };
    if let Some(path) = &a.data {
        c.data = DataSource::Csv {
            path: path.clone(),
            target: None,
            task: None,
            metadata: String::new(),
        };
    }
    if let Some(spec) = &a.generate {
        c.data = DataSource::Generated {
            table: parse_generated(spec)?,
        };
    }
    if let DataSource::Csv {
        target,
        task,
        metadata,
        ..
    } = &mut c.data
    {
        set(target, a.target.clone().map(Some));
        set(
            task,
            a.task
                .as_deref()
                .map(|t| kebab("task", t))
                .transpose()?
                .map(Some),
        );
        set(metadata, a.metadata.clone());
    } else if a.target.is_some() || a.task.is_some() || a.metadata.is_some() {
        bail!("--target, --task and --metadata apply to CSV data only");
    }
    set(&mut c.split_ratio, a.split_ratio);
    set(&mut c.split_seed, a.split_seed);
    set(&mut c.seed, a.seed);
    set(&mut c.budget, a.budget);
    set(&mut c.proposals_per_round, a.proposals);

    let e: &mut ElicitationConfig = &mut c.elicitation;
    set(&mut e.delta, a.delta);
    set(&mut e.gamma_kappa, a.gamma_kappa);
    set(&mut e.eta, a.eta);
    set(&mut e.update_steps, a.update_steps);
    set(&mut e.update_learning_rate, a.update_lr);
    set(&mut e.update_mc_samples, a.update_samples);

    let s: &mut SurrogateConfig = &mut c.surrogate;
    set(&mut s.hidden_width, a.surrogate_hidden);
    set(&mut s.obs_noise, a.obs_noise);
    set(&mut s.mc_samples_train, a.fit_samples);
    set(&mut s.mc_samples_predict, a.predict_samples);
    set(&mut s.steps, a.fit_steps);
    set(&mut s.learning_rate, a.fit_lr);
    set(&mut s.init_mean_std, a.init_mean_std);
    set(&mut s.init_std, a.init_std);
    set(&mut s.warm_start, a.warm_start);

    let l = &mut c.learner;
    set(
        &mut l.kind,
        a.learner
            .as_deref()
            .map(|k| kebab::<LearnerKind>("learner", k))
            .transpose()?,
    );
    set(&mut l.hidden_width, a.learner_hidden);
    set(&mut l.l2, a.learner_l2);
    set(&mut l.epochs, a.learner_epochs);
    set(&mut l.learning_rate, a.learner_lr);
    set(&mut l.batch_size, a.learner_batch);
    set(
        &mut l.regression_metric,
        a.regression_metric
            .as_deref()
            .map(|m| kebab("regression metric", m))
            .transpose()?,
    );
    set(&mut l.seed, a.learner_seed);

    set(&mut c.encoder.dim, a.embedding_dim);
    set(
        &mut c.encoder.cache_dir,
        a.embedding_cache.clone().map(Some),
    );

    if let Some(spec) = &a.proposer {
        c.proposer = ProposerBackend::from_spec(spec).map_err(|e| anyhow!("--proposer: {e}"))?;
    }
    if let Some(spec) = &a.human {
        c.oracle = OracleSpec::parse(spec).map_err(|e| anyhow!("--human: {e}"))?;
    }
    set(&mut c.oracle_timeout_secs, a.oracle_timeout);
    set(&mut c.output_dir, a.out.clone().map(Some));
    c.validate()?;
    Ok(c)
}

fn progress(e: &SessionEvent) {
    match e {
        SessionEvent::RoundStarted { round, budget } => eprintln!("round {round}/{budget}"),
        SessionEvent::QueryIssued { query } => eprintln!(
            "  query: A {} vs B {}",
            query.a.expression, query.b.expression
        ),
        SessionEvent::FeedbackReceived { z, .. } => eprintln!("  feedback: {z:?}"),
        SessionEvent::RoundFinished { record, .. } => eprintln!("  {}", round_line(record)),
        SessionEvent::SessionDone { .. } => {}
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = build_config(&args)?;
    let summary = if matches!(config.oracle, OracleSpec::Session) {
        run_hosted(config, &args.listen, args.quiet)?
    } else {
        let mut session = Session::from_config(config)?;
        if !args.quiet {
            session.set_event_sink(Box::new(progress));
        }
        session.run()?
    };
    print_summary(&summary, args.json)
}

/// Runs one session behind the HTTP service so a client can answer its
/// queries; returns when the session finishes.
fn run_hosted(config: SessionConfig, listen: &str, quiet: bool) -> Result<SessionSummary> {
    let runtime = tokio::runtime::Runtime::new()?;
    let state = Arc::new(AppState::new(None));
    let listener = runtime.block_on(tokio::net::TcpListener::bind(listen))?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    let app = hilfe_server::router(Arc::clone(&state));
    runtime.spawn(async move { axum_serve(listener, app).await });
    let id = state.launch(config)?;
    eprintln!("session id {id}");
    let mut seen = 0;
    loop {
        let s = state
            .state(&id)
            .ok_or_else(|| anyhow!("session vanished"))?;
        if !quiet {
            for r in &s.snapshot.records[seen..] {
                eprintln!("  {}", round_line(r));
            }
        }
        seen = s.snapshot.records.len();
        match s.status {
            Status::Running => std::thread::sleep(Duration::from_millis(100)),
            Status::Failed => bail!(s.error.unwrap_or_else(|| "session failed".into())),
            Status::Done => {
                let snap = s.snapshot;
                return Ok(SessionSummary {
                    rounds: snap.records.len(),
                    initial_score: snap.initial_score,
                    final_score: snap.score,
                    queries: snap
                        .records
                        .iter()
                        .filter(|r| r.decision.as_ref().is_some_and(|d| d.queried))
                        .count(),
                    accepted: snap.accepted,
                    reason: if snap.records.len() < snap.budget {
                        "aborted".into()
                    } else {
                        "budget exhausted".into()
                    },
                });
            }
        }
    }
}

async fn axum_serve(listener: tokio::net::TcpListener, app: hilfe_server::Router) {
    if let Err(e) = hilfe_server::serve_on(listener, app).await {
        log::error!("server stopped: {e}");
    }
}

fn print_summary(s: &SessionSummary, json: bool) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(s)?)?;
        return Ok(());
    }
    writeln!(out, "rounds: {} ({})", s.rounds, s.reason)?;
    writeln!(out, "queries: {}", s.queries)?;
    writeln!(out, "score: {:.6} -> {:.6}", s.initial_score, s.final_score)?;
    for a in &s.accepted {
        writeln!(
            out,
            "accepted round {}: {} = {} (g = {:+.6})",
            a.round, a.column, a.expression, a.g
        )?;
    }
    Ok(())
}

fn round_line(r: &RoundRecord) -> String {
    if r.skipped {
        return format!("round {:>3}: skipped (empty pool)", r.round);
    }
    let mut line = format!("round {:>3}: pool {:>3}", r.round, r.pool_size);
    if let Some(op) = &r.selected_operation {
        line.push_str(&format!(" | {} = {}", op.name, op.expression));
    }
    if let Some(d) = &r.decision {
        if d.queried {
            match d.feedback {
                Some(z) => line.push_str(&format!(" | queried, z = {z:?}")),
                None if d.timed_out => line.push_str(" | queried, timed out"),
                None => line.push_str(" | queried, no answer"),
            }
        }
    }
    if let Some(u) = &r.utility {
        line.push_str(&format!(" | g {:+.6}", u.g));
    }
    line.push_str(if r.accepted {
        " | accepted"
    } else {
        " | rejected"
    });
    line.push_str(&format!(" | best {:.6}", r.best_score));
    line
}

fn cmd_replay(dir: &Path) -> Result<()> {
    let records = read_round_log(&dir.join("rounds.jsonl"))?;
    let mut out = std::io::stdout().lock();
    for r in &records {
        r.validate().map_err(|e| anyhow!(e))?;
        writeln!(out, "{}", round_line(r))?;
        if let Some(d) = &r.decision {
            writeln!(
                out,
                "           beta {:.4} | A {} mu {:.6} sigma {:.6}",
                d.beta, d.e_a.expression, d.moments_a.mu, d.moments_a.sigma
            )?;
            if let (Some(b), Some(m)) = (&d.e_b, &d.moments_b) {
                writeln!(
                    out,
                    "           B {} mu {:.6} sigma {:.6}",
                    b.expression, m.mu, m.sigma
                )?;
            }
        }
    }
    writeln!(
        out,
        "{} rounds; log sha256 {}",
        records.len(),
        replay_hash(dir)?
    )?;
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let records = read_round_log(&dir.join("rounds.jsonl"))?;
    let timings = read_timings(&dir.join("timings.jsonl"))?;
    print!("{}", report(&records, &timings));
    Ok(())
}

fn report(records: &[RoundRecord], timings: &[StageTimings]) -> String {
    let mut s = String::from("round | pool | queried | g | accepted | best\n");
    for r in records {
        s.push_str(&format!(
            "{:>5} | {:>4} | {:>7} | {:>10} | {:>8} | {:.6}\n",
            r.round,
            r.pool_size,
            if r.decision.as_ref().is_some_and(|d| d.queried) {
                "yes"
            } else {
                "no"
            },
            r.utility
                .as_ref()
                .map_or("-".into(), |u| format!("{:+.6}", u.g)),
            if r.accepted { "yes" } else { "no" },
            r.best_score
        ));
    }
    let n = timings.len().max(1) as f64;
    let mean = |f: fn(&StageTimings) -> f64| timings.iter().map(f).sum::<f64>() / n;
    let total = mean(|t| t.total_ms);
    type Stage = (&'static str, fn(&StageTimings) -> f64);
    let stages: [Stage; 8] = [
        ("propose", |t| t.propose_ms),
        ("encode", |t| t.encode_ms),
        ("fit", |t| t.fit_ms),
        ("select", |t| t.select_ms),
        ("query", |t| t.query_ms),
        ("update", |t| t.update_ms),
        ("evaluate", |t| t.evaluate_ms),
        ("total", |t| t.total_ms),
    ];
    s.push_str(&format!(
        "\nstage | mean ms | share  ({} rounds)\n",
        timings.len()
    ));
    for (name, f) in stages {
        let m = mean(f);
        let share = if total > 0.0 { 100.0 * m / total } else { 0.0 };
        s.push_str(&format!("{name:>8} | {m:>10.3} | {share:>5.1}%\n"));
    }
    s
}

fn cmd_synthetic(a: SyntheticArgs) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let task = match a.task.as_str() {
        "hidden-linear" => SyntheticTask::HiddenLinear { input_dim: a.dim },
        "linearized" => SyntheticTask::Linearized { input_dim: a.dim },
        other => bail!("unknown synthetic task {other:?}"),
    };
    let mut base = SyntheticConfig {
        task,
        rounds: a.rounds,
        pool_size: a.pool,
        oracle_accuracy: a.oracle_accuracy,
        elicitation: ElicitationConfig {
            delta: a.delta,
            ..ElicitationConfig::default()
        },
        ..SyntheticConfig::default()
    };
    base.elicitation.gamma_kappa = match a.gamma_kappa.as_str() {
        "auto" => calibrate_gamma_kappa(&base, 10_000..10_005, a.quantile)?,
        v => v
            .parse()
            .map_err(|_| anyhow!("invalid --gamma-kappa {v:?}"))?,
    };

    let mut csv = String::from(
        "seed,round,beta,best,selected_feedback,regret_feedback,cumulative_feedback,queried,selected_baseline,regret_baseline,cumulative_baseline,violation\n",
    );
    let (mut with, mut without, mut queries, mut violations, mut rounds) = (0.0, 0.0, 0, 0, 0);
    for seed in 0..a.seeds {
        let run = |feedback| -> Result<SyntheticRun> {
            Ok(run_synthetic(&SyntheticConfig {
                seed,
                feedback,
                ..base.clone()
            })?)
        };
        let (fb, nofb) = (run(true)?, run(false)?);
        let (mut cf, mut cb) = (0.0, 0.0);
        for (f, b) in fb.rounds.iter().zip(&nofb.rounds) {
            cf += f.regret;
            cb += b.regret;
            csv.push_str(&format!(
                "{seed},{},{},{},{},{},{cf},{},{},{},{cb},{}\n",
                f.round,
                f.beta,
                f.best,
                f.selected,
                f.regret,
                f.queried as u8,
                b.selected,
                b.regret,
                b.violation as u8
            ));
        }
        with += fb.cumulative_regret();
        without += nofb.cumulative_regret();
        queries += fb.queries();
        violations += nofb.violation_rounds();
        rounds += nofb.rounds.len();
    }
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    let n = a.seeds as f64;
    eprintln!("gamma_kappa: {:.6}", base.elicitation.gamma_kappa);
    eprintln!(
        "mean cumulative regret: {:.6} with feedback, {:.6} without",
        with / n,
        without / n
    );
    eprintln!(
        "mean queries per run: {:.2} of {} rounds",
        queries as f64 / n,
        a.rounds
    );
    eprintln!(
        "confidence violations: {violations}/{rounds} rounds ({:.4}; delta {})",
        violations as f64 / rounds.max(1) as f64,
        a.delta
    );
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    let state = Arc::new(AppState::new(a.output_root));
    runtime.block_on(hilfe_server::serve(&a.addr, state))?;
    Ok(())
}
