//! HTTP/JSON facade over the pipeline: dataset upload, R_t queries,
//! clustering, asynchronous training jobs, forecasts and what-if runs.

use std::net::SocketAddr;
use std::path::{Component, PathBuf};

use axum::extract::{Path, State};
use axum::http::header;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use thiserror::Error;

pub mod error;
pub mod handlers;
pub mod state;

pub use error::ApiError;
pub use state::{JobHandle, JobStatus, ModelRegistryEntry, Store, StoreError};

pub const LISTEN_ENV: &str = "POLICYSCOPE_LISTEN";
pub const DATA_DIR_ENV: &str = "POLICYSCOPE_DATA_DIR";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Store,
    /// Static console assets served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store, ui_dir: None }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(handlers::health))
        .route("/datasets", post(handlers::upload_dataset))
        .route("/datasets/{id}/rt", get(handlers::dataset_rt))
        .route("/datasets/{id}/cluster", post(handlers::dataset_cluster))
        .route("/models", post(handlers::create_model).get(handlers::list_models))
        .route("/models/{id}", get(handlers::get_model))
        .route("/models/{id}/forecast", post(handlers::model_forecast))
        .route("/models/{id}/whatif", post(handlers::model_whatif))
        .route("/jobs/{id}", get(handlers::get_job))
        .route("/ui", get(ui_index))
        .route("/ui/{*path}", get(ui_file))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

async fn ui_index(state: State<AppState>) -> Result<impl IntoResponse, ApiError> {
    ui_file(state, Path("index.html".to_string())).await
}

async fn ui_file(State(state): State<AppState>, Path(path): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let root = state.ui_dir.as_ref().ok_or_else(|| ApiError::not_found("console assets are not configured"))?;
    let rel = PathBuf::from(if path.is_empty() { "index.html" } else { path.as_str() });
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::not_found("no such asset"));
    }
    let full = root.join(&rel);
    let bytes = tokio::fs::read(&full).await.map_err(|_| ApiError::not_found("no such asset"))?;
    let mime = match full.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("wasm") => "application/wasm",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes))
}

/// Binds `listen` and serves until the process is stopped.
pub async fn serve(listen: &str, state: AppState) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: listen.to_string(), source })?;
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    if let Some(addr) = addr {
        eprintln!("policyscope service listening on http://{addr}");
    }
    axum::serve(listener, router(state)).await.map_err(ServiceError::Serve)
}
