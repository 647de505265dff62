use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hilfe_core::engine::{DataSource, SessionConfig};
use hilfe_core::generate::GeneratedTable;
use hilfe_core::learner::LearnerSpec;
use hilfe_core::oracle::OracleSpec;
use hilfe_core::proposer::ProposerBackend;
use hilfe_core::surrogate::SurrogateConfig;
use hilfe_server::{router, AppState};

fn config(budget: usize, oracle: OracleSpec) -> Value {
    let mut cfg = SessionConfig {
        seed: 5,
        budget,
        data: DataSource::Generated {
            table: GeneratedTable::Interaction { rows: 200, seed: 5 },
        },
        proposer: ProposerBackend::ScriptedMock {
            script: concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/basic.json").into(),
        },
        learner: LearnerSpec::linear(),
        surrogate: SurrogateConfig {
            hidden_width: 8,
            steps: 40,
            ..SurrogateConfig::default()
        },
        oracle,
        oracle_timeout_secs: 30.0,
        ..SessionConfig::default()
    };
    cfg.elicitation.gamma_kappa = 0.0;
    serde_json::to_value(cfg).unwrap()
}

fn app() -> Router {
    router(Arc::new(AppState::new(None)))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

async fn wait_for(app: &Router, id: &str, pred: impl Fn(&Value) -> bool) -> Value {
    let start = Instant::now();
    loop {
        let (status, state) = call(app, "GET", &format!("/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if pred(&state) {
            return state;
        }
        assert!(
            start.elapsed() < Duration::from_secs(60),
            "timed out: {state}"
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

/// Parses `event:`/`data:` pairs out of an SSE body until `session-done`.
async fn collect_events(body: Body) -> Vec<(String, Value)> {
    let mut body = body;
    let mut buf = String::new();
    let mut out = Vec::new();
    while let Some(frame) = body.frame().await {
        let frame = frame.unwrap();
        let Some(data) = frame.data_ref() else {
            continue;
        };
        buf.push_str(std::str::from_utf8(data).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let mut name = None;
            let mut payload = None;
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    payload = Some(serde_json::from_str::<Value>(v.trim()).unwrap());
                }
            }
            if let (Some(n), Some(p)) = (name, payload) {
                let done = n == "session-done";
                out.push((n, p));
                if done {
                    return out;
                }
            }
        }
    }
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn session_with_feedback_runs_to_completion() {
    let app = app();
    let (status, created) = call(
        &app,
        "POST",
        "/sessions",
        Some(config(2, OracleSpec::Session)),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{created}");
    let id = created["id"].as_str().unwrap().to_string();
    assert_eq!(created["state"]["snapshot"]["round"], 0);
    assert_eq!(created["state"]["status"], "running");

    let resp = app
        .clone()
        .oneshot(
            Request::get(format!("/sessions/{id}/events"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let events = tokio::spawn(collect_events(resp.into_body()));

    let (_, list) = call(&app, "GET", "/sessions", None).await;
    assert_eq!(list, json!([id]));

    // round 1: per-session endpoint
    let state = wait_for(&app, &id, |s| !s["pending"].is_null()).await;
    let q = &state["pending"];
    assert_eq!(q["round"], 1);
    let beta = q["beta"].as_f64().unwrap();
    for side in ["a", "b"] {
        let c = &q[side];
        assert!(!c["name"].as_str().unwrap().is_empty());
        assert!(!c["expression"].as_str().unwrap().is_empty());
        assert!(c["explanation"].is_string());
        let (mu, sigma, ucb) = (
            c["mu"].as_f64().unwrap(),
            c["sigma"].as_f64().unwrap(),
            c["ucb"].as_f64().unwrap(),
        );
        assert!((ucb - mu - beta.sqrt() * sigma).abs() < 1e-9);
    }
    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"round": 1, "z": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"round": 1, "z": -1})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    // round 2: shared endpoint, wrong round first
    wait_for(&app, &id, |s| s["pending"]["round"] == 2).await;
    let (status, _) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({"session": id, "round": 1, "z": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({"session": id, "round": 2, "z": -1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let done = wait_for(&app, &id, |s| s["status"] != "running").await;
    assert_eq!(done["status"], "done");
    assert_eq!(done["snapshot"]["round"], 2);
    assert_eq!(done["snapshot"]["records"].as_array().unwrap().len(), 2);

    let events = tokio::time::timeout(Duration::from_secs(30), events)
        .await
        .unwrap()
        .unwrap();
    let names: Vec<&str> = events.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "round-started",
            "query-issued",
            "feedback-received",
            "round-finished",
            "round-started",
            "query-issued",
            "feedback-received",
            "round-finished",
            "session-done"
        ]
    );
    let issued = &events[1].1;
    assert!(!issued["query"]["a"]["name"].as_str().unwrap().is_empty());
    assert_eq!(events[2].1["z"], 1);
    assert_eq!(events[6].1["z"], -1);
    let record = &events[3].1["record"];
    assert_eq!(record["round"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_and_malformed_requests() {
    let app = app();
    let (status, _) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
    let (status, _) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({"session": "nope", "round": 1, "z": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/feedback", Some(json!({"round": 1, "z": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        "POST",
        "/feedback",
        Some(json!({"session": "x", "round": 1, "z": 7})),
    )
    .await;
    assert!(status.is_client_error());
    let (status, _) = call(&app, "GET", "/sessions/nope/events", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let mut bad = config(1, OracleSpec::None);
    bad["budget"] = json!(0);
    let (status, body) = call(&app, "POST", "/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("budget"));
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_without_a_human_reject_feedback() {
    let app = app();
    let (status, created) =
        call(&app, "POST", "/sessions", Some(config(1, OracleSpec::None))).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"round": 1, "z": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let done = wait_for(&app, &id, |s| s["status"] != "running").await;
    assert_eq!(done["status"], "done");
    assert!(done["pending"].is_null());
}

#[tokio::test(flavor = "multi_thread")]
async fn abort_stops_a_waiting_session() {
    let app = app();
    let (_, created) = call(
        &app,
        "POST",
        "/sessions",
        Some(config(5, OracleSpec::Session)),
    )
    .await;
    let id = created["id"].as_str().unwrap().to_string();
    wait_for(&app, &id, |s| !s["pending"].is_null()).await;
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/abort"), None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let done = wait_for(&app, &id, |s| s["status"] != "running").await;
    assert_eq!(done["status"], "done");
    assert!(done["snapshot"]["round"].as_u64().unwrap() < 5);
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"round": 1, "z": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}
