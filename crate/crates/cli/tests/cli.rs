use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn hilfe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hilfe"))
        .args(args)
        .current_dir(repo())
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn quick_run(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "run",
        "--proposer",
        "mock:fixtures/basic.json",
        "--generate",
        "interaction:200:1",
        "--learner",
        "linear",
        "--surrogate-hidden",
        "8",
        "--fit-steps",
        "40",
        "--out",
        dir.to_str().unwrap(),
    ];
    if !extra.contains(&"--human") {
        args.extend_from_slice(&["--human", "none"]);
    }
    args.extend_from_slice(extra);
    ok(&hilfe(&args))
}

#[test]
fn run_with_one_round_writes_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&hilfe(&[
        "run",
        "--budget",
        "1",
        "--proposer",
        "mock:fixtures/basic.json",
        "--human",
        "none",
        "--out",
        dir.path().to_str().unwrap(),
    ]));
    assert!(out.contains("rounds: 1"), "{out}");
    let log = fs::read_to_string(dir.path().join("rounds.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(dir.path().join("final_train.csv").exists());
}

#[test]
fn report_and_replay_render_a_persisted_run() {
    let dir = tempfile::tempdir().unwrap();
    let summary = quick_run(dir.path(), &["--budget", "3", "--json", "--quiet"]);
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["rounds"], 3);

    let report = ok(&hilfe(&["report", dir.path().to_str().unwrap()]));
    assert!(report.contains("stage | mean ms"), "{report}");
    for stage in ["propose", "fit", "select", "evaluate", "total"] {
        assert!(
            report.lines().any(|l| l.trim_start().starts_with(stage)),
            "{stage}\n{report}"
        );
    }
    let trajectory: Vec<&str> = report
        .lines()
        .skip(1)
        .take_while(|l| !l.is_empty())
        .collect();
    assert_eq!(trajectory.len(), 3);

    let replay = ok(&hilfe(&["replay", dir.path().to_str().unwrap()]));
    assert_eq!(replay.lines().filter(|l| l.starts_with("round")).count(), 3);
    assert!(replay.contains("3 rounds; log sha256 "));
}

#[test]
fn identical_runs_replay_to_the_same_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    quick_run(a.path(), &["--budget", "2", "--quiet"]);
    quick_run(b.path(), &["--budget", "2", "--quiet"]);
    let hash = |d: &Path| {
        let text = ok(&hilfe(&["replay", d.to_str().unwrap()]));
        text.lines().last().unwrap().to_string()
    };
    assert_eq!(hash(a.path()), hash(b.path()));
}

#[test]
fn synthetic_writes_one_row_per_seed_and_round() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("regret.csv");
    let out = hilfe(&[
        "synthetic",
        "--seeds",
        "20",
        "--oracle-accuracy",
        "0.9",
        "--out",
        csv.to_str().unwrap(),
    ]);
    ok(&out);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "seed");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 20 * 20);
    assert!(rows.iter().all(|r| r.split(',').count() == header.len()));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("confidence violations"), "{stderr}");
    assert!(stderr.contains("mean cumulative regret"), "{stderr}");
}

#[test]
fn hosted_session_without_queries_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_run(
        dir.path(),
        &[
            "--budget",
            "2",
            "--human",
            "session",
            "--gamma-kappa",
            "inf",
            "--listen",
            "127.0.0.1:0",
        ],
    );
    assert!(out.contains("rounds: 2"), "{out}");
    assert!(out.contains("queries: 0"), "{out}");
}

#[test]
fn usage_errors_exit_nonzero() {
    for args in [
        vec!["run", "--budget", "0", "--human", "none"],
        vec!["run", "--human", "sometimes"],
        vec!["run", "--proposer", "carrier-pigeon"],
        vec!["synthetic", "--task", "cubic"],
        vec!["report", "/nonexistent/session"],
        vec!["frobnicate"],
    ] {
        let out = hilfe(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} gave no message");
    }
}
