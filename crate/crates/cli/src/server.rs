//! HTTP front end over [`SessionManager`]. Session operations run on the
//! blocking pool because moves may compute a distance field and append to
//! the trajectory log.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tracing::{info, warn};
use wikirace_core::session::{CreateSession, ResultsFilter, SessionError};
use wikirace_core::tasks::{Split, TaskRecord};
use wikirace_core::SessionManager;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip)]
    status: StatusCode,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            code: "bad_request".into(),
            message: message.into(),
            status: StatusCode::BAD_REQUEST,
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: "internal".into(),
            message: message.into(),
            status: StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "task_not_found" | "session_not_found" => StatusCode::NOT_FOUND,
        "invalid_choice" | "bad_request" => StatusCode::BAD_REQUEST,
        "game_over" => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = e.code();
        if code == "internal" {
            warn!("session error: {e}");
        }
        Self {
            code: code.into(),
            message: e.to_string(),
            status: status_for(code),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<SessionManager>;

async fn blocking<T, F>(m: &Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&SessionManager) -> Result<T, SessionError> + Send + 'static,
{
    let m = Arc::clone(m);
    tokio::task::spawn_blocking(move || f(&m))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_session(
    State(m): State<Shared>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<wikirace_core::session::SessionDescriptor>), ApiError> {
    let Json(req) = body?;
    let d = blocking(&m, move |m| m.create_session(&req)).await?;
    Ok((StatusCode::CREATED, Json(d)))
}

async fn get_session(State(m): State<Shared>, Path(id): Path<String>) -> ApiResult<wikirace_core::SessionState> {
    blocking(&m, move |m| m.get_state(&id)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct MoveBody {
    choice: usize,
}

async fn make_move(
    State(m): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<MoveBody>, JsonRejection>,
) -> ApiResult<wikirace_core::SessionState> {
    let Json(body) = body?;
    blocking(&m, move |m| m.make_move(&id, body.choice)).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct TasksQuery {
    split: Option<String>,
}

#[derive(Debug, Serialize)]
struct TaskEntry {
    index: usize,
    #[serde(flatten)]
    record: TaskRecord,
}

async fn list_tasks(
    State(m): State<Shared>,
    query: Result<Query<TasksQuery>, QueryRejection>,
) -> ApiResult<Vec<TaskEntry>> {
    let Query(q) = query?;
    let raw = q.split.ok_or_else(|| ApiError::bad_request("missing query parameter split"))?;
    let split: Split = raw.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?;
    let records = m.list_tasks(split)?;
    Ok(Json(
        records
            .into_iter()
            .enumerate()
            .map(|(index, record)| TaskEntry { index, record })
            .collect(),
    ))
}

async fn get_results(
    State(m): State<Shared>,
    query: Result<Query<ResultsFilter>, QueryRejection>,
) -> ApiResult<Vec<wikirace_core::GameTrajectory>> {
    let Query(filter) = query?;
    blocking(&m, move |m| m.get_results(&filter)).await.map(Json)
}

async fn api_not_found() -> ApiError {
    ApiError {
        code: "not_found".into(),
        message: "no such endpoint".into(),
        status: StatusCode::NOT_FOUND,
    }
}

pub fn router(manager: Shared, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/move", post(make_move))
        .route("/api/tasks", get(list_tasks))
        .route("/api/results", get(get_results))
        .route("/api/{*rest}", get(api_not_found).post(api_not_found))
        .with_state(manager);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until `shutdown` resolves. Idle sessions are swept every
/// `sweep_every` and abandoned after `idle_timeout`.
pub async fn serve(
    listener: TcpListener,
    manager: Shared,
    ui_dir: Option<PathBuf>,
    idle_timeout: Duration,
    sweep_every: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let sweeper = {
        let m = Arc::clone(&manager);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(sweep_every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let m = Arc::clone(&m);
                if let Ok(expired) = tokio::task::spawn_blocking(move || m.expire_idle(idle_timeout)).await {
                    if !expired.is_empty() {
                        info!(count = expired.len(), "abandoned idle sessions");
                    }
                }
            }
        })
    };
    let app = router(manager, ui_dir);
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result
}
