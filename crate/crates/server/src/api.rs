//! HTTP API over the session store.
//!
//! Errors are JSON `{code, message, context}` with status 400 for client
//! errors, 404 for unknown sessions, 409 for `WRONG_PHASE` and 500 for
//! internal failures.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dw_core::consult::{start_session, RecommendationReport, Session, SessionSummary};
use dw_core::format::DiagramDocument;
use dw_core::schema::{Bindings, FeatureVector, SchemaLibraryDocument};
use dw_core::sensitivity::{evpi, sweep, ParamRef};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::store::{SessionStore, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub context: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: String, context: Option<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message,
                context,
            },
        }
    }
}

impl From<dw_core::Error> for ApiError {
    fn from(e: dw_core::Error) -> Self {
        let status = match e.code() {
            "WRONG_PHASE" => StatusCode::CONFLICT,
            "INTERNAL_NONTERMINATION" => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string(), e.context())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Engine(e) => e.into(),
            StoreError::NotFound(id) => ApiError::new(
                StatusCode::NOT_FOUND,
                "SESSION_NOT_FOUND",
                format!("session `{id}` not found"),
                Some(id),
            ),
            other => {
                log::error!("{other}");
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "STORAGE_ERROR",
                    other.to_string(),
                    None,
                )
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Bodies are parsed by hand so malformed JSON gets the same error shape
/// as every other failure.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        dw_core::Error::Parse {
            message: e.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        }
        .into()
    })
}

pub struct AppState {
    store: SessionStore,
    // one lock per session: mutations take it exclusively, reads shared
    sessions: Mutex<HashMap<String, Arc<RwLock<Session>>>>,
}

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        AppState {
            store,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<RwLock<Session>>, ApiError> {
        let mut sessions = self.sessions.lock().unwrap();
        if let Some(s) = sessions.get(id) {
            return Ok(s.clone());
        }
        let session = Arc::new(RwLock::new(self.store.load(id)?));
        sessions.insert(id.to_string(), session.clone());
        Ok(session)
    }

    /// Applies `f` to a copy of the session and persists the copy if its
    /// log grew, even when `f` fails (rejections are logged events).
    async fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, dw_core::Error>,
    ) -> Result<T, ApiError> {
        let lock = self.session(id)?;
        let mut guard = lock.write().await;
        let mut next = guard.clone();
        let outcome = f(&mut next);
        if next.events.len() != guard.events.len() {
            self.store.save(&next)?;
            *guard = next;
        }
        Ok(outcome?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartRequest {
    #[serde(default)]
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BindingsRequest {
    pub bindings: Bindings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamRequest {
    pub param: ParamRef,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub param: ParamRef,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvpiRequest {
    pub chance: String,
    pub decision: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvpiResponse {
    pub evpi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionReport {
    pub session: SessionSummary,
    pub report: RecommendationReport,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/bindings", post(provide_bindings))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/sessions/{id}/commit", post(commit))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/sweep", post(session_sweep))
        .route("/sessions/{id}/evpi", post(session_evpi))
        .route("/schemas", get(schemas))
        .route("/diagrams/{id}", get(diagram))
        .with_state(state)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let req: StartRequest = parse_body(&body)?;
    let session = start_session(req.features, state.store.library())?;
    state.store.save(&session)?;
    log::info!("session {} started with schema {}", session.id, session.schema_id);
    let summary = session.summary();
    state
        .sessions
        .lock()
        .unwrap()
        .insert(session.id.clone(), Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> ApiResult<Vec<SessionSummary>> {
    let mut out = Vec::new();
    for id in state.store.list()? {
        out.push(state.session(&id)?.read().await.summary());
    }
    Ok(Json(out))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<SessionSummary> {
    Ok(Json(state.session(&id)?.read().await.summary()))
}

async fn provide_bindings(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<SessionReport> {
    let req: BindingsRequest = parse_body(&body)?;
    let library = state.store.library();
    let out = state
        .mutate(&id, |s| {
            s.provide_bindings(req.bindings, library)?;
            Ok(SessionReport {
                session: s.summary(),
                report: s.report()?,
            })
        })
        .await;
    if let Err(e) = &out {
        log::warn!("session {id}: bindings rejected with {}", e.body.code);
    }
    out.map(Json)
}

async fn whatif(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<dw_core::consult::WhatIfResult> {
    let req: ParamRequest = parse_body(&body)?;
    let lock = state.session(&id)?;
    let session = lock.read().await;
    Ok(Json(session.whatif(&req.param, req.value)?))
}

async fn commit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<SessionReport> {
    let req: ParamRequest = parse_body(&body)?;
    let library = state.store.library();
    let out = state
        .mutate(&id, |s| {
            s.commit(&req.param, req.value, library)?;
            Ok(SessionReport {
                session: s.summary(),
                report: s.report()?,
            })
        })
        .await?;
    Ok(Json(out))
}

async fn report(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<RecommendationReport> {
    Ok(Json(state.session(&id)?.read().await.report()?))
}

fn require_diagram(session: &Session) -> Result<&dw_core::InfluenceDiagram, ApiError> {
    session.diagram.as_ref().ok_or_else(|| {
        dw_core::Error::WrongPhase {
            expected: "REFINE".into(),
            actual: session.phase.to_string(),
        }
        .into()
    })
}

async fn session_sweep(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<dw_core::sensitivity::SweepResult> {
    let req: SweepRequest = parse_body(&body)?;
    let lock = state.session(&id)?;
    let session = lock.read().await;
    Ok(Json(sweep(require_diagram(&session)?, &req.param, &req.grid)?))
}

async fn session_evpi(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<EvpiResponse> {
    let req: EvpiRequest = parse_body(&body)?;
    let lock = state.session(&id)?;
    let session = lock.read().await;
    let value = evpi(require_diagram(&session)?, &req.chance, &req.decision)?;
    Ok(Json(EvpiResponse { evpi: value }))
}

async fn schemas(State(state): State<Arc<AppState>>) -> Json<SchemaLibraryDocument> {
    Json(state.store.library().to_document())
}

async fn diagram(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<DiagramDocument> {
    let lock = state.session(&id)?;
    let session = lock.read().await;
    Ok(Json(DiagramDocument::from_diagram(require_diagram(&session)?)?))
}

/// Serves the API on `port` until the process is stopped.
pub async fn serve(store: SessionStore, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!(
        "listening on {} with data in {}",
        listener.local_addr()?,
        store.root().display()
    );
    axum::serve(listener, router(Arc::new(AppState::new(store)))).await
}
