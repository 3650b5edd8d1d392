//! HTTP API over the job store.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kmgpt_core::prep::EditList;
use serde_json::json;
use tokio::sync::Semaphore;

use crate::jobs::{JobError, JobStore};
use crate::pipeline::{PipelineConfig, IPD_CSV, METADATA_JSON, OVERLAY_PNG, REPORT_JSON};

pub const PROVIDER_KEY_HEADER: &str = "x-provider-key";
const MAX_UPLOAD: usize = 32 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: JobStore,
    /// Bounds concurrently running pipelines.
    pub workers: Arc<Semaphore>,
}

impl AppState {
    pub fn new(job_dir: impl Into<PathBuf>, workers: usize) -> Result<Self, JobError> {
        Ok(Self {
            store: JobStore::open(job_dir)?,
            workers: Arc::new(Semaphore::new(workers.max(1))),
        })
    }
}

pub struct ApiError(JobError);

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            JobError::NotFound(_) => StatusCode::NOT_FOUND,
            JobError::Conflict { .. } => StatusCode::CONFLICT,
            JobError::BadRequest(_) => StatusCode::BAD_REQUEST,
            JobError::Io(_) | JobError::Record(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.0.to_string() }))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/jobs", post(create_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/edits", post(post_edits))
        .route("/api/jobs/{id}/run", post(run_job))
        .route("/api/jobs/{id}/overlay.png", get(|s, p| artifact(s, p, OVERLAY_PNG, "image/png")))
        .route("/api/jobs/{id}/ipd.csv", get(|s, p| artifact(s, p, IPD_CSV, "text/csv")))
        .route("/api/jobs/{id}/metadata.json", get(|s, p| artifact(s, p, METADATA_JSON, "application/json")))
        .route("/api/jobs/{id}/report.json", get(|s, p| artifact(s, p, REPORT_JSON, "application/json")))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, JobError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(JobError::Io(std::io::Error::other(e.to_string()))))?
        .map_err(ApiError)
}

/// Takes the `image` field, or the first field when none is named so.
async fn create_job(State(st): State<AppState>, mut form: Multipart) -> Result<Response, ApiError> {
    let bad = |e: String| ApiError(JobError::BadRequest(e));
    let mut bytes = None;
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        let named = field.name() == Some("image");
        let data = field.bytes().await.map_err(|e| bad(e.to_string()))?;
        if named || bytes.is_none() {
            bytes = Some(data);
        }
        if named {
            break;
        }
    }
    let bytes = bytes.ok_or_else(|| bad("multipart body has no image".into()))?;
    let store = st.store.clone();
    let job = blocking(move || store.create(&bytes)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "id": job.id, "state": job.state }))).into_response())
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = st.store.clone();
    Ok(Json(blocking(move || store.get(&id)).await?).into_response())
}

async fn post_edits(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(edits): Json<EditList>,
) -> Result<Response, ApiError> {
    let store = st.store.clone();
    Ok(Json(blocking(move || store.set_edits(&id, &edits)).await?).into_response())
}

/// Accepts the run and returns at once; the pipeline waits for a worker.
async fn run_job(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(config): Json<PipelineConfig>,
) -> Result<Response, ApiError> {
    config.validate().map_err(|e| ApiError(JobError::BadRequest(e)))?;
    let api_key = headers
        .get(PROVIDER_KEY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned)
        .filter(|k| !k.is_empty());
    let store = st.store.clone();
    let claim_id = id.clone();
    blocking(move || store.claim(&claim_id)).await?;
    let store = st.store.clone();
    let workers = st.workers.clone();
    let run_id = id.clone();
    tokio::spawn(async move {
        let Ok(_permit) = workers.acquire_owned().await else {
            return;
        };
        let res = tokio::task::spawn_blocking(move || store.run(&run_id, &config, api_key)).await;
        match res {
            Ok(Ok(job)) => tracing::info!(job = %job.id, state = %job.state, "job finished"),
            Ok(Err(e)) => tracing::error!(error = %e, "job store error"),
            Err(e) => tracing::error!(error = %e, "pipeline worker panicked"),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "id": id, "status": "accepted" }))).into_response())
}

async fn artifact(
    State(st): State<AppState>,
    Path(id): Path<String>,
    name: &'static str,
    content_type: &'static str,
) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let bytes = blocking(move || Ok(std::fs::read(store.artifact(&id, name)?)?)).await?;
    Ok(([(header::CONTENT_TYPE, content_type)], Body::from(bytes)).into_response())
}

/// Binds and serves until ctrl-c. A busy port fails at startup.
pub async fn serve(addr: &str, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    tracing::info!(addr = %listener.local_addr()?, jobs = %state.store.root().display(), "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
