//! Acceptance suite. Each test checks one criterion and prints a single
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`).

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;

use hilfe_core::dataset::{auroc, load_table};
use hilfe_core::dsl::{evaluate, FeatureOperation};
use hilfe_core::engine::synthetic::{
    calibrate_gamma_kappa, run_synthetic, SyntheticConfig, SyntheticTask,
};
use hilfe_core::engine::{replay_hash, DataSource, Session, SessionConfig};
use hilfe_core::generate::GeneratedTable;
use hilfe_core::learner::LearnerSpec;
use hilfe_core::proposer::ProposerBackend;
use hilfe_core::selection::{
    should_query, update_with_preference, ElicitationConfig, Preference, QueryReason,
};
use hilfe_core::surrogate::{
    beta, elbo_loss, elbo_loss_gradient, fit, predict_batch, Architecture, Observation,
    PredictiveMoments, SurrogateConfig, VariationalPosterior,
};
use hilfe_core::util::rng_from_seed;

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn report(name: &str, pass: bool, detail: String, elapsed: Duration, limit: Option<Duration>) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let ok = pass && in_time;
    println!(
        "[{}] {name}: {detail} ({:.2}s{})",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit
            .map(|l| format!(" / limit {}s", l.as_secs()))
            .unwrap_or_default()
    );
    assert!(pass, "{name}: {detail}");
    assert!(in_time, "{name}: exceeded time limit");
}

#[test]
fn beta_schedule() {
    let start = Instant::now();
    let oracle = 2.0 * (15.0 * std::f64::consts::PI.powi(2) / 0.3).ln();
    let value = beta(1, 15, 0.1);
    let formula_ok = (value - oracle).abs() < 1e-3;

    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        ..PropConfig::default()
    });
    let monotone = runner.run(
        &(1usize..10_000, 1usize..10_000, 1e-6f64..0.999),
        |(t, n, delta)| {
            let b = beta(t, n, delta);
            prop_assert!(b.is_finite());
            prop_assert!(beta(t + 1, n, delta) > b);
            prop_assert!(beta(t, n + 1, delta) > b);
            Ok(())
        },
    );
    report(
        "beta schedule",
        formula_ok && monotone.is_ok(),
        format!(
            "beta(1,15,0.1) = {value:.6}, independent value {oracle:.6}; monotone over 1000 triples: {}",
            monotone.is_ok()
        ),
        start.elapsed(),
        Some(Duration::from_secs(1)),
    );
}

#[test]
fn confidence_coverage() {
    let start = Instant::now();
    let (mut violations, mut rounds) = (0, 0);
    for seed in 0..50 {
        let cfg = SyntheticConfig {
            task: SyntheticTask::Linearized { input_dim: 14 },
            rounds: 20,
            pool_size: 15,
            seed,
            elicitation: ElicitationConfig {
                delta: 0.1,
                ..ElicitationConfig::default()
            },
            ..SyntheticConfig::default()
        };
        let run = run_synthetic(&cfg).unwrap();
        violations += run.violation_rounds();
        rounds += run.rounds.len();
    }
    let fraction = violations as f64 / rounds as f64;
    report(
        "confidence coverage",
        fraction <= 0.10,
        format!("{violations}/{rounds} rounds with a violation ({fraction:.4} <= 0.10)"),
        start.elapsed(),
        Some(Duration::from_secs(120)),
    );
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    let start = Instant::now();
    let arch = Architecture {
        input_dim: 6,
        hidden: 12,
    };
    assert!(arch.n_params() <= 200);
    let mut rng = rng_from_seed(17);
    let history: Vec<Observation> = (0..12)
        .map(|_| {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = x[0] * x[1] - 0.5 * x[2] + rng.random_range(-0.1..0.1);
            Observation::new(x, y)
        })
        .collect();
    let mut q = VariationalPosterior::prior(arch);
    for (m, r) in q.means.iter_mut().zip(q.rho.iter_mut()) {
        *m = rng.random_range(-0.5..0.5);
        *r = rng.random_range(-3.0..0.0);
    }
    let cfg = SurrogateConfig {
        hidden_width: 12,
        mc_samples_train: 4,
        ..SurrogateConfig::default()
    };
    let seed = 5;
    let (gm, gr) = elbo_loss_gradient(&q, &history, &cfg, seed).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for which in 0..2 {
        for i in 0..arch.n_params() {
            let mut plus = q.clone();
            let mut minus = q.clone();
            let (p, m) = if which == 0 {
                (&mut plus.means[i], &mut minus.means[i])
            } else {
                (&mut plus.rho[i], &mut minus.rho[i])
            };
            *p += h;
            *m -= h;
            let fd = (elbo_loss(&plus, &history, &cfg, seed).unwrap().total()
                - elbo_loss(&minus, &history, &cfg, seed).unwrap().total())
                / (2.0 * h);
            let analytic = if which == 0 { gm[i] } else { gr[i] };
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-2);
            worst = worst.max(rel);
        }
    }
    report(
        "elbo gradient vs finite differences",
        worst < 1e-4,
        format!(
            "{} parameters, max relative error {worst:.3e} < 1e-4",
            arch.n_params()
        ),
        start.elapsed(),
        Some(Duration::from_secs(30)),
    );
}

fn mean_difference(q: &VariationalPosterior, a: &[f64], b: &[f64], seed: u64) -> f64 {
    let m = predict_batch(q, &[a, b], 256, seed).unwrap();
    m[0].mu - m[1].mu
}

#[test]
fn probit_update_direction() {
    let start = Instant::now();
    let cfg = SurrogateConfig {
        hidden_width: 16,
        steps: 150,
        ..SurrogateConfig::default()
    };
    let elicitation = ElicitationConfig::default();
    let mut successes = 0;
    for rep in 0..20u64 {
        let mut rng = rng_from_seed(1000 + rep);
        let d = 5;
        let draw = |rng: &mut hilfe_core::util::SeededRng| -> Vec<f64> {
            (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let history: Vec<Observation> = (0..8)
            .map(|_| {
                let x = draw(&mut rng);
                let y = x.iter().sum::<f64>();
                Observation::new(x, y)
            })
            .collect();
        let q = fit(&history, d, &cfg, rep, None).unwrap();
        let (mut a, mut b) = (draw(&mut rng), draw(&mut rng));
        let seed = 77 + rep;
        if mean_difference(&q, &a, &b, seed) > 0.0 {
            std::mem::swap(&mut a, &mut b);
        }
        let before = mean_difference(&q, &a, &b, seed);
        let q2 = update_with_preference(&q, &a, &b, Preference::A, &elicitation, rep).unwrap();
        let after = mean_difference(&q2, &a, &b, seed);
        if before < 0.0 && after > before {
            successes += 1;
        }
    }
    report(
        "probit update direction",
        successes >= 19,
        format!("{successes}/20 repetitions moved the mean difference toward a (need 19)"),
        start.elapsed(),
        Some(Duration::from_secs(60)),
    );
}

fn brute_force_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn auroc_matches_brute_force() {
    let start = Instant::now();
    let mut rng = rng_from_seed(99);
    let mut worst: f64 = 0.0;
    let mut with_ties = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..120);
        let levels = rng.random_range(2..8);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 * 0.5)
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let distinct: BTreeSet<u64> = scores.iter().map(|s| s.to_bits()).collect();
        if distinct.len() < n {
            with_ties += 1;
        }
        let fast = auroc(&scores, &labels).unwrap();
        worst = worst.max((fast - brute_force_auroc(&scores, &labels)).abs());
    }
    report(
        "auroc oracle equivalence",
        worst <= 1e-12,
        format!("200 instances ({with_ties} with ties), max deviation {worst:.2e}"),
        start.elapsed(),
        Some(Duration::from_secs(10)),
    );
}

#[test]
fn dsl_golden_corpus() {
    let start = Instant::now();
    let table = load_table(&repo_file("fixtures/golden_table.csv"), None).unwrap();
    let t4 = |x: f64| x.tanh();
    let corpus: Vec<(&str, &str, Vec<f64>, Vec<&str>)> = vec![
        (
            "days_since_first_event_weighted",
            r#"0.5 * col("days_since_first_event_xxxxx_event_data") + 0.5 * col("days_since_first_event_yyyyy_event_data")"#,
            vec![15.0, 2.0, 3.0, 4.0, 50.0],
            vec![
                "days_since_first_event_xxxxx_event_data",
                "days_since_first_event_yyyyy_event_data",
            ],
        ),
        (
            "wifi_cleanliness_booking",
            r#"col("Inflight wifi service") * col("Cleanliness") * col("Ease of Online booking")"#,
            vec![24.0, 50.0, 15.0, 0.0, 4.0],
            vec![
                "Inflight wifi service",
                "Cleanliness",
                "Ease of Online booking",
            ],
        ),
        (
            "digital_experience_tensor",
            r#"((col("Inflight wifi service") * col("Ease of Online booking") * col("Online boarding")) ^ (1/3) * col("Cleanliness") ^ 0.5) * tanh((col("Seat comfort") + col("Leg room service")) / 2.0)"#,
            vec![
                24f64.powf(1.0 / 3.0) * 2.0 * t4(4.0),
                125f64.powf(1.0 / 3.0) * 2f64.sqrt() * t4(1.5),
                3f64.powf(1.0 / 3.0) * 5f64.sqrt() * t4(3.5),
                0.0,
                12f64.powf(1.0 / 3.0) * 1.0 * t4(3.5),
            ],
            vec![
                "Inflight wifi service",
                "Ease of Online booking",
                "Online boarding",
                "Cleanliness",
                "Seat comfort",
                "Leg room service",
            ],
        ),
        (
            "business_travel_cleanliness_comfort",
            r#"(col("Type of Travel") = "Business travel") * mean(col("Cleanliness"), col("Seat comfort"), col("Leg room service"))"#,
            vec![4.0, 0.0, 4.0, 0.0, 8.0 / 3.0],
            vec![
                "Type of Travel",
                "Cleanliness",
                "Seat comfort",
                "Leg room service",
            ],
        ),
        (
            "age_weighted_health_interaction",
            r#"(col("Age") * (col("HighBP") + col("HighChol") + col("HeartDiseaseorAttack"))) / (1 + col("Smoker") * col("BMI"))"#,
            vec![18.0 / 26.0, 5.0, 26.0 / 23.5, 0.0, 21.0],
            vec![
                "Age",
                "HighBP",
                "HighChol",
                "HeartDiseaseorAttack",
                "Smoker",
                "BMI",
            ],
        ),
        (
            "lifestyle_risk_balance_enhanced",
            r#"(col("Fruits") + col("Veggies") + col("PhysActivity")) / (col("Smoker") + col("HvyAlcoholConsump") + col("NoDocbcCost") + 1)"#,
            vec![2.0 / 3.0, 2.0, 2.0 / 3.0, 0.75, 0.0],
            vec![
                "Fruits",
                "Veggies",
                "PhysActivity",
                "Smoker",
                "HvyAlcoholConsump",
                "NoDocbcCost",
            ],
        ),
        (
            "activity_diet_balance",
            r#"(col("Fruits") + col("Veggies") + col("PhysActivity")) / (col("Smoker") + col("HvyAlcoholConsump") + 1)"#,
            vec![1.0, 2.0, 2.0 / 3.0, 1.0, 0.0],
            vec![
                "Fruits",
                "Veggies",
                "PhysActivity",
                "Smoker",
                "HvyAlcoholConsump",
            ],
        ),
        (
            "diff_walk_health_interplay",
            r#"col("DiffWalk") * col("BMI")"#,
            vec![0.0, 31.0, 22.5, 0.0, 18.0],
            vec!["DiffWalk", "BMI"],
        ),
        (
            "multi_axis_risk_composite",
            r#"((col("Age") * (col("HighBP") + col("HighChol") + col("HeartDiseaseorAttack"))) / (1 + col("Smoker") * (1 + col("BMI")))) * ((col("Fruits") + col("Veggies") + col("PhysActivity") + 1) / (1 + col("HvyAlcoholConsump") + col("NoDocbcCost")))"#,
            vec![1.0, 15.0, 39.0 / 24.5, 0.0, 21.0],
            vec![
                "Age",
                "HighBP",
                "HighChol",
                "HeartDiseaseorAttack",
                "Smoker",
                "BMI",
                "Fruits",
                "Veggies",
                "PhysActivity",
                "HvyAlcoholConsump",
                "NoDocbcCost",
            ],
        ),
    ];
    let mut failures = Vec::new();
    for (name, code, expected, used) in &corpus {
        let op = FeatureOperation::new(*name, code, "").unwrap();
        let got = evaluate(&op.expression, &table).unwrap().values;
        let max_err = got
            .iter()
            .zip(expected)
            .map(|(g, e)| (g - e).abs())
            .fold(0.0, f64::max);
        let expected_used: BTreeSet<String> = used.iter().map(|s| s.to_string()).collect();
        if got.len() != expected.len() || max_err > 1e-12 || op.columns_used() != expected_used {
            failures.push(format!("{name} (max error {max_err:.2e})"));
        }
    }
    report(
        "dsl golden corpus",
        failures.is_empty(),
        format!(
            "{}/{} expressions exact to 1e-12 with matching column sets{}",
            corpus.len() - failures.len(),
            corpus.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {failures:?}")
            }
        ),
        start.elapsed(),
        None,
    );
}

#[test]
fn trigger_grid() {
    let start = Instant::now();
    let m = |mu, sigma| PredictiveMoments {
        mu,
        sigma,
        n_samples: 64,
    };
    // (mu_a, sigma_a, mu_b, sigma_b, beta, gamma_kappa, query, reason)
    // gap = LCB(a) - UCB(b) is -0.5, 0 or +0.5; gamma sits below, on or above
    // the gain bound G = sqrt(beta) (sigma_a + sigma_b).
    use QueryReason::*;
    #[rustfmt::skip]
    type Case = (f64, f64, f64, f64, f64, f64, bool, QueryReason);
    let cases: [Case; 36] = [
        // beta 1, sigmas 0.5 / 0.25: G = 0.75
        (0.25, 0.5, 0.0, 0.25, 1.0, 0.5, true, Ok),
        (0.25, 0.5, 0.0, 0.25, 1.0, 0.75, true, Ok),
        (0.25, 0.5, 0.0, 0.25, 1.0, 1.0, false, LowUncertainty),
        (0.75, 0.5, 0.0, 0.25, 1.0, 0.5, false, NoOverlap),
        (0.75, 0.5, 0.0, 0.25, 1.0, 0.75, false, NoOverlap),
        (0.75, 0.5, 0.0, 0.25, 1.0, 1.0, false, NoOverlap),
        (1.25, 0.5, 0.0, 0.25, 1.0, 0.5, false, NoOverlap),
        (1.25, 0.5, 0.0, 0.25, 1.0, 0.75, false, NoOverlap),
        (1.25, 0.5, 0.0, 0.25, 1.0, 1.0, false, NoOverlap),
        // beta 4, sigmas 0.25 / 0.5: G = 1.5
        (1.0, 0.25, 0.0, 0.5, 4.0, 1.25, true, Ok),
        (1.0, 0.25, 0.0, 0.5, 4.0, 1.5, true, Ok),
        (1.0, 0.25, 0.0, 0.5, 4.0, 1.75, false, LowUncertainty),
        (1.5, 0.25, 0.0, 0.5, 4.0, 1.25, false, NoOverlap),
        (1.5, 0.25, 0.0, 0.5, 4.0, 1.5, false, NoOverlap),
        (1.5, 0.25, 0.0, 0.5, 4.0, 1.75, false, NoOverlap),
        (2.0, 0.25, 0.0, 0.5, 4.0, 1.25, false, NoOverlap),
        (2.0, 0.25, 0.0, 0.5, 4.0, 1.5, false, NoOverlap),
        (2.0, 0.25, 0.0, 0.5, 4.0, 1.75, false, NoOverlap),
        // beta 1, sigmas 1 / 1: G = 2
        (1.5, 1.0, 0.0, 1.0, 1.0, 1.75, true, Ok),
        (1.5, 1.0, 0.0, 1.0, 1.0, 2.0, true, Ok),
        (1.5, 1.0, 0.0, 1.0, 1.0, 2.25, false, LowUncertainty),
        (2.0, 1.0, 0.0, 1.0, 1.0, 1.75, false, NoOverlap),
        (2.0, 1.0, 0.0, 1.0, 1.0, 2.0, false, NoOverlap),
        (2.0, 1.0, 0.0, 1.0, 1.0, 2.25, false, NoOverlap),
        (2.5, 1.0, 0.0, 1.0, 1.0, 1.75, false, NoOverlap),
        (2.5, 1.0, 0.0, 1.0, 1.0, 2.0, false, NoOverlap),
        (2.5, 1.0, 0.0, 1.0, 1.0, 2.25, false, NoOverlap),
        // beta 4, sigmas 0.125 / 0.375: G = 1
        (0.5, 0.125, 0.0, 0.375, 4.0, 0.75, true, Ok),
        (0.5, 0.125, 0.0, 0.375, 4.0, 1.0, true, Ok),
        (0.5, 0.125, 0.0, 0.375, 4.0, 1.25, false, LowUncertainty),
        (1.0, 0.125, 0.0, 0.375, 4.0, 0.75, false, NoOverlap),
        (1.0, 0.125, 0.0, 0.375, 4.0, 1.0, false, NoOverlap),
        (1.0, 0.125, 0.0, 0.375, 4.0, 1.25, false, NoOverlap),
        (1.5, 0.125, 0.0, 0.375, 4.0, 0.75, false, NoOverlap),
        (1.5, 0.125, 0.0, 0.375, 4.0, 1.0, false, NoOverlap),
        (1.5, 0.125, 0.0, 0.375, 4.0, 1.25, false, NoOverlap),
    ];
    let mut correct = 0;
    for (i, &(ma, sa, mb, sb, b, gamma, query, reason)) in cases.iter().enumerate() {
        let cfg = ElicitationConfig {
            gamma_kappa: gamma,
            ..ElicitationConfig::default()
        };
        let v = should_query(&m(ma, sa), &m(mb, sb), b, &cfg);
        if v.query == query && v.reason == reason {
            correct += 1;
        } else {
            println!("trigger case {i} mismatch: {v:?}");
        }
    }
    report(
        "trigger logic grid",
        correct == cases.len(),
        format!("{correct}/{} cases", cases.len()),
        start.elapsed(),
        None,
    );
}

#[test]
fn feedback_regret_experiment() {
    let start = Instant::now();
    let base = |seed: u64, feedback: bool, gamma_kappa: f64| SyntheticConfig {
        task: SyntheticTask::HiddenLinear { input_dim: 8 },
        rounds: 20,
        pool_size: 15,
        seed,
        feedback,
        oracle_accuracy: 0.9,
        elicitation: ElicitationConfig {
            gamma_kappa,
            ..ElicitationConfig::default()
        },
        ..SyntheticConfig::default()
    };
    // Calibrate the query cost on pilot seeds disjoint from the evaluation.
    let gamma_kappa = calibrate_gamma_kappa(&base(0, true, 0.0), 100..105, 0.75).unwrap();

    let (mut with, mut without, mut queries) = (0.0, 0.0, 0usize);
    let seeds = 20;
    for seed in 0..seeds {
        let a = run_synthetic(&base(seed, true, gamma_kappa)).unwrap();
        let b = run_synthetic(&base(seed, false, gamma_kappa)).unwrap();
        with += a.cumulative_regret();
        without += b.cumulative_regret();
        queries += a.queries();
    }
    let n = seeds as f64;
    let (with, without, mean_queries) = (with / n, without / n, queries as f64 / n);
    let rate = mean_queries / 20.0;
    report(
        "feedback regret experiment",
        with <= without && mean_queries <= 0.6 * 20.0 && (0.2..=0.6).contains(&rate),
        format!(
            "gamma_kappa {gamma_kappa:.4}; mean cumulative regret {with:.4} with feedback vs {without:.4} without; {mean_queries:.2} queries per run ({:.0}% of rounds)",
            rate * 100.0
        ),
        start.elapsed(),
        Some(Duration::from_secs(300)),
    );
}

fn interaction_config(seed: u64) -> SessionConfig {
    SessionConfig {
        seed,
        split_seed: seed,
        budget: 10,
        data: DataSource::Generated {
            table: GeneratedTable::Interaction { rows: 400, seed },
        },
        proposer: ProposerBackend::ScriptedMock {
            script: repo_file("fixtures/basic.json"),
        },
        learner: LearnerSpec::linear(),
        ..SessionConfig::default()
    }
}

#[test]
fn end_to_end_interaction_task() {
    let start = Instant::now();
    let (mut found, mut min_lift) = (0, f64::INFINITY);
    for seed in 0..10 {
        let mut session = Session::from_config(interaction_config(seed)).unwrap();
        let summary = session.run().unwrap();
        if summary
            .accepted
            .iter()
            .any(|c| c.expression == r#"col("a") * col("b")"#)
        {
            found += 1;
        }
        min_lift = min_lift.min(summary.final_score - summary.initial_score);
    }
    report(
        "end-to-end interaction task",
        found >= 8 && min_lift >= 0.05,
        format!("interaction accepted in {found}/10 seeds; smallest AUROC lift {min_lift:.4}"),
        start.elapsed(),
        Some(Duration::from_secs(180)),
    );
}

#[test]
fn determinism_and_replay() {
    let start = Instant::now();
    let cfg = |dir: &std::path::Path| SessionConfig {
        budget: 4,
        output_dir: Some(dir.to_path_buf()),
        data: DataSource::Generated {
            table: GeneratedTable::Interaction { rows: 200, seed: 3 },
        },
        surrogate: SurrogateConfig {
            hidden_width: 16,
            steps: 100,
            ..SurrogateConfig::default()
        },
        oracle: hilfe_core::oracle::OracleSpec::Simulated { accuracy: 0.9 },
        elicitation: ElicitationConfig {
            gamma_kappa: 0.0,
            ..ElicitationConfig::default()
        },
        ..interaction_config(3)
    };
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs[..2] {
        Session::from_config(cfg(d.path())).unwrap().run().unwrap();
    }
    let logs: Vec<Vec<u8>> = dirs[..2]
        .iter()
        .map(|d| fs::read(d.path().join("rounds.jsonl")).unwrap())
        .collect();
    let identical = logs[0] == logs[1];

    let mut partial = Session::from_config(cfg(dirs[2].path())).unwrap();
    partial.step().unwrap();
    partial.step().unwrap();
    drop(partial);
    Session::resume(dirs[2].path(), None)
        .unwrap()
        .run()
        .unwrap();
    let h_full = replay_hash(dirs[0].path()).unwrap();
    let h_resumed = replay_hash(dirs[2].path()).unwrap();

    let resumed = Session::resume(dirs[0].path(), None).unwrap();
    resumed.persist(dirs[0].path()).unwrap();
    let h_persisted = replay_hash(dirs[0].path()).unwrap();
    report(
        "determinism and replay",
        identical && h_full == h_resumed && h_full == h_persisted,
        format!(
            "identical logs: {identical}; resumed hash matches: {}; persist/resume hash matches: {}",
            h_full == h_resumed,
            h_full == h_persisted
        ),
        start.elapsed(),
        None,
    );
}

#[test]
fn stage_timing_share() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = SessionConfig {
        budget: 10,
        data: DataSource::Generated {
            table: GeneratedTable::Wide {
                rows: 10_000,
                cols: 100,
                seed: 0,
            },
        },
        proposer: ProposerBackend::ScriptedMock {
            script: repo_file("fixtures/wide.json"),
        },
        output_dir: Some(dir.path().to_path_buf()),
        ..SessionConfig::default()
    };
    let mut session = Session::from_config(config).unwrap();
    session.run().unwrap();
    let t = session.timings();
    let surrogate_ms: f64 = t.iter().map(|s| s.fit_ms + s.select_ms).sum();
    let total_ms: f64 = t.iter().map(|s| s.total_ms).sum();
    let share = surrogate_ms / total_ms;
    report(
        "stage timing share",
        share < 0.25,
        format!(
            "surrogate fit + UCB selection {surrogate_ms:.0} ms of {total_ms:.0} ms round time ({:.1}% < 25%)",
            share * 100.0
        ),
        start.elapsed(),
        Some(Duration::from_secs(300)),
    );
}
