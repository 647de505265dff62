//! HTTP service hosting concurrent sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | liveness |
//! | GET | `/sessions` | session ids |
//! | POST | `/sessions` | create from a `SessionConfig`, returns `{id, state}` |
//! | GET | `/sessions/{id}` | snapshot, pending query, status |
//! | GET | `/sessions/{id}/events` | server-sent events |
//! | POST | `/sessions/{id}/feedback` | `{round, z}` |
//! | POST | `/feedback` | `{session, round, z}` |
//! | POST | `/sessions/{id}/abort` | stop the session |
//!
//! Feedback for anything but the pending query is rejected with 409.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
pub use axum::Router;
use futures::{Stream, StreamExt};
use log::{error, info};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use hilfe_core::engine::{EngineError, Session, SessionConfig, SessionEvent, SessionSnapshot};
use hilfe_core::oracle::{OracleSpec, PreferenceOracle, PreferenceQuery, SessionChannel};
use hilfe_core::selection::Preference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Done,
    Failed,
}

/// Body of `GET /sessions/{id}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub status: Status,
    pub error: Option<String>,
    pub pending: Option<PreferenceQuery>,
    pub snapshot: SessionSnapshot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub state: SessionState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackBody {
    #[serde(default)]
    pub session: Option<String>,
    pub round: usize,
    pub z: Preference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct Handle {
    id: String,
    snapshot: RwLock<SessionSnapshot>,
    status: RwLock<(Status, Option<String>)>,
    channel: Option<SessionChannel>,
    abort: Arc<AtomicBool>,
    events: broadcast::Sender<SessionEvent>,
    history: Mutex<Vec<SessionEvent>>,
}

impl Handle {
    fn publish(&self, e: SessionEvent) {
        let mut history = self.history.lock().expect("history lock");
        history.push(e.clone());
        let _ = self.events.send(e);
    }

    /// Past events plus a receiver for everything after them.
    fn subscribe(&self) -> (Vec<SessionEvent>, broadcast::Receiver<SessionEvent>) {
        let history = self.history.lock().expect("history lock");
        (history.clone(), self.events.subscribe())
    }

    fn state(&self) -> SessionState {
        let (status, error) = self.status.read().expect("status lock").clone();
        SessionState {
            id: self.id.clone(),
            status,
            error,
            pending: self.channel.as_ref().and_then(|c| c.pending()),
            snapshot: self.snapshot.read().expect("snapshot lock").clone(),
        }
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Handle>>>,
    counter: AtomicU64,
    output_root: Option<PathBuf>,
}

impl AppState {
    /// Sessions without an explicit output directory persist under
    /// `output_root/<id>` when set.
    pub fn new(output_root: Option<PathBuf>) -> Self {
        Self {
            output_root,
            ..Self::default()
        }
    }

    /// Builds a session and starts its driver thread; returns the new id.
    /// Blocks while the dataset loads and the baseline is scored.
    pub fn launch(&self, mut config: SessionConfig) -> Result<String, EngineError> {
        let id = format!("s{:04}", self.counter.fetch_add(1, Ordering::SeqCst) + 1);
        if config.output_dir.is_none() {
            config.output_dir = self.output_root.as_ref().map(|r| r.join(&id));
        }
        let channel = matches!(config.oracle, OracleSpec::Session).then(SessionChannel::new);
        let mut session = match &channel {
            Some(c) => Session::with_oracle(
                config,
                Some(Box::new(c.clone()) as Box<dyn PreferenceOracle>),
            )?,
            None => Session::from_config(config)?,
        };
        let (events, _) = broadcast::channel(1024);
        let handle = Arc::new(Handle {
            id: id.clone(),
            snapshot: RwLock::new(session.snapshot()),
            status: RwLock::new((Status::Running, None)),
            channel,
            abort: session.abort_handle(),
            events,
            history: Mutex::default(),
        });
        // Round-finished and session-done are held back until the snapshot
        // reflects them, so a client reading state after either sees it.
        let deferred: Arc<Mutex<Vec<SessionEvent>>> = Arc::default();
        let sink_deferred = Arc::clone(&deferred);
        let sink_handle = Arc::clone(&handle);
        session.set_event_sink(Box::new(move |e| match e {
            SessionEvent::RoundFinished { .. } | SessionEvent::SessionDone { .. } => {
                sink_deferred.lock().expect("event buffer").push(e.clone())
            }
            _ => sink_handle.publish(e.clone()),
        }));
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id.clone(), Arc::clone(&handle));
        std::thread::spawn(move || drive(session, handle, deferred));
        info!("created session {id}");
        Ok(id)
    }

    pub fn state(&self, id: &str) -> Option<SessionState> {
        self.get(id).ok().map(|h| h.state())
    }

    fn get(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/events", get(session_events))
        .route("/sessions/{id}/feedback", post(session_feedback))
        .route("/sessions/{id}/abort", post(abort_session))
        .route("/feedback", post(feedback))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: &str, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, router(state)).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<String>> {
    let mut ids: Vec<String> = app
        .sessions
        .read()
        .expect("sessions lock")
        .keys()
        .cloned()
        .collect();
    ids.sort();
    Json(ids)
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(config): Json<SessionConfig>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let launcher = Arc::clone(&app);
    let id = tokio::task::spawn_blocking(move || launcher.launch(config))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let state = app.get(&id)?.state();
    Ok((StatusCode::CREATED, Json(Created { id, state })))
}

fn drive(mut session: Session, handle: Arc<Handle>, deferred: Arc<Mutex<Vec<SessionEvent>>>) {
    let flush = |session: &Session| {
        *handle.snapshot.write().expect("snapshot lock") = session.snapshot();
        for e in deferred.lock().expect("event buffer").drain(..) {
            handle.publish(e);
        }
    };
    loop {
        match session.step() {
            Ok(Some(_)) => flush(&session),
            Ok(None) => break,
            Err(e) => {
                error!("session {} failed: {e}", handle.id);
                *handle.status.write().expect("status lock") =
                    (Status::Failed, Some(e.to_string()));
                flush(&session);
                return;
            }
        }
    }
    let status = match session.run() {
        Ok(_) => (Status::Done, None),
        Err(e) => (Status::Failed, Some(e.to_string())),
    };
    *handle.status.write().expect("status lock") = status;
    if let Some(c) = &handle.channel {
        c.close();
    }
    flush(&session);
}

async fn session_state(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    Ok(Json(app.get(&id)?.state()))
}

async fn session_events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = app.get(&id)?;
    let (past, rx) = handle.subscribe();
    let replay = futures::stream::iter(past);
    let live = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(e) => return Some((e, rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let stream = replay.chain(live).scan(false, |done, e| {
        let emit = (!*done).then(|| {
            *done = matches!(e, SessionEvent::SessionDone { .. });
            Ok(Event::default()
                .event(e.name())
                .data(serde_json::to_string(&e).expect("event serializes")))
        });
        futures::future::ready(emit)
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

fn submit(handle: &Handle, body: &FeedbackBody) -> Result<Json<serde_json::Value>, ApiError> {
    let Some(channel) = &handle.channel else {
        return Err(ApiError(
            StatusCode::CONFLICT,
            "session does not take feedback".into(),
        ));
    };
    channel
        .submit(body.round, body.z)
        .map_err(|e| ApiError(StatusCode::CONFLICT, e.to_string()))?;
    Ok(Json(
        serde_json::json!({ "accepted": true, "round": body.round }),
    ))
}

async fn session_feedback(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<FeedbackBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    if body.session.as_ref().is_some_and(|s| *s != id) {
        return Err(ApiError(
            StatusCode::BAD_REQUEST,
            "session id mismatch".into(),
        ));
    }
    submit(&*app.get(&id)?, &body)
}

async fn feedback(
    State(app): State<Arc<AppState>>,
    Json(body): Json<FeedbackBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let id = body
        .session
        .clone()
        .ok_or_else(|| ApiError(StatusCode::BAD_REQUEST, "missing session".into()))?;
    submit(&*app.get(&id)?, &body)
}

async fn abort_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    let handle = app.get(&id)?;
    handle.abort.store(true, Ordering::SeqCst);
    if let Some(c) = &handle.channel {
        c.close();
    }
    Ok(StatusCode::ACCEPTED)
}
