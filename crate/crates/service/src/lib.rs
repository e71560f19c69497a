//! REST front end for live episodes. Each session owns one scene run and
//! one goal; a client steps the agent, answers its questions when the
//! session is in human mode, and polls state snapshots.
//!
//! Routes: `POST /sessions`, `POST /sessions/{id}/step`,
//! `POST /sessions/{id}/message`, `GET /sessions/{id}/state?reveal=bool`,
//! `GET /scenes`. Errors come back as `{"error": "..."}`.

pub mod session;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pnav_core::agent::World;
use pnav_core::orchestrator::{Ablation, AgentConfig, LoopConfig, Policy, Preset, RemotePolicy, SceneRun, ScriptedPolicy};
use pnav_core::remote::HttpChatClient;
use pnav_core::user_sim::{FeedbackRegime, TemplateUser};
use serde::Deserialize;
use serde_json::{json, Value};

pub use session::{Mode, Phase, Session, SessionError};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Conflict(m) => Self::new(StatusCode::CONFLICT, m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type SessionRef = Arc<Mutex<Session>>;

pub struct AppState {
    worlds: BTreeMap<String, Arc<World>>,
    sessions: Mutex<HashMap<u64, SessionRef>>,
    next_id: AtomicU64,
    chat_url: Option<String>,
}

impl AppState {
    /// `chat_url` enables `"policy": "remote"` sessions.
    pub fn new(worlds: impl IntoIterator<Item = Arc<World>>, chat_url: Option<String>) -> Arc<Self> {
        Arc::new(Self {
            worlds: worlds.into_iter().map(|w| (w.scene.id().to_string(), w)).collect(),
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            chat_url,
        })
    }

    fn session(&self, id: &str) -> Result<SessionRef, ApiError> {
        let not_found = || ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id:?}"));
        let id: u64 = id.parse().map_err(|_| not_found())?;
        self.sessions.lock().unwrap().get(&id).cloned().ok_or_else(not_found)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/message", post(message))
        .route("/sessions/{id}/state", get(snapshot))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn list_scenes(State(app): State<Arc<AppState>>) -> Json<Value> {
    let scenes: Vec<Value> = app
        .worlds
        .values()
        .map(|w| {
            let s = &w.scene;
            let goals: Vec<Value> =
                s.goals().iter().enumerate().map(|(i, g)| json!({ "index": i, "name": g.name, "type": g.goal_type })).collect();
            json!({ "id": s.id(), "rows": s.rows(), "cols": s.cols(), "resolution": s.resolution(), "goals": goals })
        })
        .collect();
    Json(json!(scenes))
}

fn default_policy() -> String {
    "scripted".into()
}

fn default_feedback() -> FeedbackRegime {
    FeedbackRegime::Mixed
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    scene: String,
    #[serde(default)]
    goal: usize,
    #[serde(default = "default_policy")]
    policy: String,
    #[serde(default)]
    mode: Mode,
    #[serde(default = "default_feedback")]
    feedback: FeedbackRegime,
    #[serde(default)]
    seed: u64,
    preset: Option<Preset>,
    #[serde(default)]
    ablations: Vec<Ablation>,
    i_max: Option<usize>,
    step_cap: Option<usize>,
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: CreateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad session config: {e}")))?;
    let world = app.worlds.get(&req.scene).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown scene {:?}", req.scene)))?;
    let goals = world.scene.goals().len();
    if req.goal >= goals {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("goal {} out of range, scene has {goals}", req.goal)));
    }
    let policy: Box<dyn Policy> = match (req.policy.as_str(), &app.chat_url) {
        ("scripted", _) => Box::new(ScriptedPolicy::new()),
        ("remote", Some(url)) => Box::new(RemotePolicy::new(HttpChatClient::new(url, Duration::from_secs(60)))),
        ("remote", None) => return Err(ApiError::new(StatusCode::BAD_REQUEST, "no chat endpoint configured for remote policies")),
        (other, _) => return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown policy {other:?}"))),
    };
    let defaults = LoopConfig::default();
    let loop_cfg = LoopConfig {
        i_max: req.i_max.unwrap_or(defaults.i_max),
        step_cap: req.step_cap.unwrap_or(defaults.step_cap),
        single_talk: req.feedback == FeedbackRegime::None,
    };
    if loop_cfg.i_max == 0 || loop_cfg.step_cap == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "i_max and step_cap must be positive"));
    }
    let agent = AgentConfig::new(req.preset.unwrap_or(Preset::Orion), &req.ablations);
    let run = SceneRun::new(world.clone(), agent, loop_cfg, req.seed, None);
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    let session = Session::new(id, req.mode, req.goal, run, policy, TemplateUser::new(req.feedback, req.seed));
    let phase = session.phase();
    app.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(json!({ "id": id, "state": phase })))
}

/// Agent turns are CPU-bound, so they run off the async workers.
async fn blocking(session: SessionRef, f: impl FnOnce(&mut Session) -> Result<Value, SessionError> + Send + 'static) -> Result<Json<Value>, ApiError> {
    let out = tokio::task::spawn_blocking(move || f(&mut session.lock().unwrap()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(out?))
}

async fn step(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    blocking(app.session(&id)?, Session::step).await
}

#[derive(Debug, Deserialize)]
struct MessageRequest {
    text: String,
}

async fn message(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let req: MessageRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("bad message: {e}")))?;
    blocking(session, move |s| s.message(&req.text)).await
}

#[derive(Debug, Deserialize)]
struct StateQuery {
    #[serde(default)]
    reveal: bool,
}

async fn snapshot(State(app): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<StateQuery>) -> Result<Json<Value>, ApiError> {
    let session = app.session(&id)?;
    let snap = session.lock().unwrap().snapshot(q.reveal);
    Ok(Json(snap))
}
