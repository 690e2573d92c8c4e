//! JSON-over-HTTP API for interactive sessions.
//!
//! ```text
//! POST   /v1/sessions                  {"query": "...", "variant": "full"}
//! POST   /v1/sessions/{id}/answers     {"answer": "...", "stop": false}
//! GET    /v1/sessions/{id}/transcript
//! DELETE /v1/sessions/{id}
//! ```
//!
//! Handlers only translate between JSON and [`Engine`] calls. Engine calls
//! block on the LLM backend, so they run on the blocking thread pool. Each
//! session is guarded by its own mutex; a request that finds the session busy
//! gets `409 Conflict` instead of waiting.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex, TryLockError};
use std::time::{Duration, Instant};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::aspect::AspectKind;
use crate::session::{
    AnswerOutput, Engine, RoundOutput, Session, SessionConfig, SessionError, SessionTranscript,
};
use crate::variant::Variant;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub session: SessionConfig,
    /// Sessions idle for longer than this are dropped.
    pub idle_ttl: Duration,
    /// Directory with a static chat client, served at `/`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            session: SessionConfig::default(),
            idle_ttl: Duration::from_secs(30 * 60),
            ui_dir: None,
        }
    }
}

struct Slot {
    session: Mutex<Session>,
    last_used: Mutex<Instant>,
}

impl Slot {
    fn touch(&self) {
        *self.last_used.lock().unwrap() = Instant::now();
    }
}

pub struct AppState {
    engine: Engine,
    cfg: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(engine: Engine, cfg: ServiceConfig) -> Arc<Self> {
        Arc::new(Self { engine, cfg, sessions: Mutex::new(HashMap::new()) })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn sweep(&self) {
        let ttl = self.cfg.idle_ttl;
        self.sessions
            .lock()
            .unwrap()
            .retain(|_, slot| slot.last_used.lock().unwrap().elapsed() <= ttl);
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sweep();
        let slot = self
            .sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-session", format!("no session {id}")))?;
        slot.touch();
        Ok(slot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionBody {
    pub aspect: AspectKind,
    pub question: String,
    pub options: Vec<String>,
}

impl From<RoundOutput> for QuestionBody {
    fn from(r: RoundOutput) -> Self {
        Self { aspect: r.aspect, question: r.question, options: r.options.into_vec() }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub query: String,
    #[serde(default)]
    pub variant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub round: usize,
    #[serde(flatten)]
    pub question: QuestionBody,
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub answer: String,
    #[serde(default)]
    pub stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub round: usize,
    pub extended_query: String,
    pub recommendations: Vec<String>,
    pub next: Option<QuestionBody>,
}

impl AnswerResponse {
    pub fn new(round: usize, out: AnswerOutput, next: Option<RoundOutput>) -> Self {
        Self {
            round,
            extended_query: out.extended_query,
            recommendations: out.recommendations.into_vec(),
            next: next.map(QuestionBody::from),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self { status, kind: kind.into(), message: message.into() }
    }

    fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "session-busy", "another request is in progress for this session")
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::EmptyQuery | SessionError::EmptyAnswer | SessionError::InvalidConfig(_) => {
                StatusCode::BAD_REQUEST
            }
            SessionError::PendingQuestion
            | SessionError::NoPendingQuestion
            | SessionError::RoundLimit(_)
            | SessionError::Closed => StatusCode::CONFLICT,
            SessionError::Gateway(_) | SessionError::Parse(_) => StatusCode::BAD_GATEWAY,
            SessionError::Retrieval(_) | SessionError::Prompt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "kind": self.kind, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateRequest>,
) -> Result<Json<CreateResponse>, ApiError> {
    state.sweep();
    let variant = match req.variant.as_deref() {
        None => Variant::Full,
        Some(v) => v
            .parse()
            .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid-variant", e))?,
    };
    let st = state.clone();
    let (session, out) = blocking(move || {
        let mut session = st.engine.start_session(&req.query, variant, st.cfg.session)?;
        let out = st.engine.next_question(&mut session)?;
        Ok((session, out))
    })
    .await?;
    let resp = CreateResponse {
        session_id: session.id().to_string(),
        round: session.round(),
        question: out.into(),
    };
    let slot = Slot { session: Mutex::new(session), last_used: Mutex::new(Instant::now()) };
    state
        .sessions
        .lock()
        .unwrap()
        .insert(resp.session_id.clone(), Arc::new(slot));
    Ok(Json(resp))
}

async fn submit_answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<AnswerRequest>,
) -> Result<Json<AnswerResponse>, ApiError> {
    let slot = state.slot(&id)?;
    let st = state.clone();
    let resp = blocking(move || {
        let mut session = match slot.session.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(ApiError::busy()),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let out = st.engine.submit_answer(&mut session, &req.answer)?;
        let next = if !req.stop && session.can_ask() {
            Some(st.engine.next_question(&mut session)?)
        } else {
            None
        };
        Ok(AnswerResponse::new(session.round(), out, next))
    })
    .await?;
    Ok(Json(resp))
}

async fn get_transcript(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionTranscript>, ApiError> {
    let slot = state.slot(&id)?;
    let t = blocking(move || match slot.session.try_lock() {
        Ok(s) => Ok(s.transcript()),
        Err(TryLockError::WouldBlock) => Err(ApiError::busy()),
        Err(TryLockError::Poisoned(p)) => Ok(p.into_inner().transcript()),
    })
    .await?;
    Ok(Json(t))
}

async fn delete_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionTranscript>, ApiError> {
    let slot = state.slot(&id)?;
    state.sessions.lock().unwrap().remove(&id);
    let st = state.clone();
    let t = blocking(move || {
        let mut s = slot.session.lock().unwrap_or_else(|p| p.into_inner());
        Ok(st.engine.end_session(&mut s))
    })
    .await?;
    Ok(Json(t))
}

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Arc<AppState>>, uri: Uri) -> Response {
    let Some(root) = state.cfg.ui_dir.as_ref() else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = FsPath::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let path = root.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/answers", post(submit_answer))
        .route("/v1/sessions/{id}/transcript", get(get_transcript))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .fallback(static_file)
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
