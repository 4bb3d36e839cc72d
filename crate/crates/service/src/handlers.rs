use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use chrono::{NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use policyscope::data::{load_dataset, CountrySummary};
use policyscope::forecast::ModelVariant;
use policyscope::pipeline::{self, ClusteringConfig, PipelineConfig};
use policyscope::rt::RtConfig;
use policyscope::whatif::Scenario;

use crate::error::ApiError;
use crate::state::{JobHandle, JobKind, JobStatus, ModelRegistryEntry, RegisteredModel, StoredDataset};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn dataset(state: &AppState, id: &str) -> ApiResult<StoredDataset> {
    state.store.dataset(id).ok_or_else(|| ApiError::not_found(format!("unknown dataset `{id}`")))
}

fn model(state: &AppState, id: &str) -> ApiResult<RegisteredModel> {
    state.store.model(id).ok_or_else(|| ApiError::not_found(format!("unknown model `{id}`")))
}

pub async fn health() -> impl IntoResponse {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

#[derive(Debug, Deserialize)]
pub struct UploadRequest {
    pub cases: String,
    pub policy: String,
}

#[derive(Debug, Serialize)]
pub struct UploadResponse {
    pub dataset_id: String,
    pub countries: Vec<CountrySummary>,
    pub warnings: Vec<String>,
}

pub async fn upload_dataset(
    State(state): State<AppState>,
    body: Result<Json<UploadRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<UploadResponse>)> {
    let Json(body) = body?;
    if body.cases.trim().is_empty() || body.policy.trim().is_empty() {
        return Err(ApiError::bad_request("both `cases` and `policy` CSV payloads are required"));
    }
    let dataset = load_dataset(&body.cases, &body.policy).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let warnings = dataset.warnings.iter().map(ToString::to_string).collect();
    let id = uuid::Uuid::new_v4().to_string();
    let stored = state
        .store
        .add_dataset(id.clone(), dataset, &body.cases, &body.policy)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(UploadResponse { dataset_id: id, countries: stored.dataset.summary(), warnings })))
}

#[derive(Debug, Deserialize)]
pub struct RtQuery {
    pub country: Option<String>,
}

pub async fn dataset_rt(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<RtQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(query) = query?;
    let stored = dataset(&state, &id)?;
    let country = query.country.ok_or_else(|| ApiError::bad_request("missing `country` query parameter"))?;
    let entries = blocking(move || Ok(pipeline::rt_entries(&stored.dataset, &country, &RtConfig::default())?)).await?;
    Ok(Json(entries))
}

pub async fn dataset_cluster(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ClusteringConfig>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(config) = body?;
    let stored = dataset(&state, &id)?;
    let report = blocking(move || {
        let (report, _) = pipeline::cluster_dataset(&stored.dataset, &RtConfig::default(), &config)?;
        Ok(report)
    })
    .await?;
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
pub struct TrainRequest {
    pub dataset_id: String,
    pub country: String,
    pub variant: ModelVariant,
    #[serde(default)]
    pub config: PipelineConfig,
    #[serde(default)]
    pub seed: u64,
    /// Training countries; defaults to every country in the dataset.
    pub countries: Option<Vec<String>>,
    /// Exclusive end of the training range.
    pub train_until: Option<NaiveDate>,
}

pub async fn create_model(
    State(state): State<AppState>,
    body: Result<Json<TrainRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<JobHandle>)> {
    let Json(req) = body?;
    let stored = dataset(&state, &req.dataset_id)?;
    let countries = req.countries.clone().unwrap_or_else(|| stored.dataset.countries().map(str::to_string).collect());
    for c in countries.iter().chain(std::iter::once(&req.country)) {
        if stored.dataset.record(c).is_none() {
            return Err(ApiError::not_found(format!("unknown country `{c}` in dataset `{}`", stored.id)));
        }
    }
    let job = JobHandle {
        id: uuid::Uuid::new_v4().to_string(),
        kind: JobKind::Train,
        status: JobStatus::Pending,
        detail: "queued".into(),
        model_id: None,
    };
    state.store.insert_job(job.clone());
    let queue = state.store.training_queue(&stored.id);
    let store = state.store.clone();
    let job_id = job.id.clone();
    tokio::spawn(async move {
        let _turn = queue.lock().await;
        store.update_job(&job_id, JobStatus::Running, "training".into(), None);
        let worker_store = store.clone();
        let outcome = tokio::task::spawn_blocking(move || {
            let artifact = pipeline::train_model(
                &stored.dataset,
                &req.country,
                &countries,
                req.variant,
                &req.config.forecast(),
                req.seed,
                req.train_until,
            )?;
            let id = uuid::Uuid::new_v4().to_string();
            let entry = ModelRegistryEntry {
                id: id.clone(),
                dataset_id: stored.id.clone(),
                target_country: artifact.target_country.clone(),
                variant: artifact.variant,
                cluster_countries: artifact.cluster_countries.clone(),
                seed: artifact.seed,
                created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
                artifact: format!("models/{id}/artifact.json"),
                metrics: artifact.metrics.clone(),
            };
            worker_store
                .register_model(entry, artifact)
                .map_err(|e| policyscope::Error::Config(format!("persisting model: {e}")))?;
            Ok::<_, policyscope::Error>(id)
        })
        .await;
        match outcome {
            Ok(Ok(model_id)) => store.update_job(&job_id, JobStatus::Done, "model registered".into(), Some(model_id)),
            Ok(Err(e)) => store.update_job(&job_id, JobStatus::Failed, e.to_string(), None),
            Err(e) => store.update_job(&job_id, JobStatus::Failed, format!("worker failed: {e}"), None),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

pub async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobHandle>> {
    state.store.job(&id).map(Json).ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
}

pub async fn list_models(State(state): State<AppState>) -> Json<Vec<ModelRegistryEntry>> {
    Json(state.store.models())
}

pub async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ModelRegistryEntry>> {
    Ok(Json(model(&state, &id)?.entry))
}

#[derive(Debug, Deserialize)]
pub struct ForecastRequest {
    pub start: NaiveDate,
    pub horizon: usize,
    /// Defaults to the model's target country.
    pub country: Option<String>,
}

fn model_and_dataset(state: &AppState, id: &str) -> ApiResult<(RegisteredModel, StoredDataset)> {
    let m = model(state, id)?;
    let d = state
        .store
        .dataset(&m.entry.dataset_id)
        .ok_or_else(|| ApiError::not_found(format!("dataset `{}` of model `{id}` is gone", m.entry.dataset_id)))?;
    Ok((m, d))
}

pub async fn model_forecast(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ForecastRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    if req.horizon == 0 {
        return Err(ApiError::bad_request("horizon must be at least 1 day"));
    }
    let (m, d) = model_and_dataset(&state, &id)?;
    let points = blocking(move || {
        let country = req.country.unwrap_or_else(|| m.entry.target_country.clone());
        Ok(pipeline::forecast(&m.artifact, &d.dataset, &country, req.start, req.horizon)?)
    })
    .await?;
    Ok(Json(points))
}

pub async fn model_whatif(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Scenario>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(scenario) = body?;
    let (m, d) = model_and_dataset(&state, &id)?;
    let result =
        blocking(move || Ok(pipeline::whatif(&m.artifact, &d.dataset, &m.entry.target_country, &scenario)?)).await?;
    Ok(Json(result))
}
