//! REST facade over the engine.

use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use propagator_core::engine::{Engine, EngineError, PropagationRecord, SearchOutcome};
use propagator_core::index::PropagationQuery;
use propagator_core::ontology::{DataStreamRecord, NewPageBinding, PageBinding, PageId, StreamId, VisFunctionRecord};
use propagator_ingest::{cache_path, read_series, AgentReport, AgentScheduler, IngestError, IngestManifest};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::ops::{run_ingest, ParamsOverride};

pub struct AppState {
    pub engine: Engine,
    pub config: ServiceConfig,
    scheduler: Mutex<AgentScheduler>,
}

impl AppState {
    pub fn new(engine: Engine, config: ServiceConfig) -> Self {
        let scheduler = AgentScheduler::load(&config.agent_state_path()).unwrap_or_default();
        Self { engine, config, scheduler: Mutex::new(scheduler) }
    }
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_query", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let code = e.code();
        let status = match code {
            "not_found" => StatusCode::NOT_FOUND,
            "invalid_query" | "invalid_record" => StatusCode::BAD_REQUEST,
            "duplicate_propagation" => StatusCode::CONFLICT,
            "validation_failed" => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, code, e.to_string())
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
        (self.status, Json(json!({ "error_code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs CPU-bound engine work off the async workers.
async fn blocking<T, F>(state: &Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state)).await.map_err(|e| ApiError::internal(e.to_string()))?
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/streams", get(list_streams).post(put_stream))
        .route("/streams/{id}/data", get(stream_data))
        .route("/vis-functions", get(list_vis).post(put_vis))
        .route("/pages", get(list_pages).post(create_page))
        .route("/pages/{id}", get(get_page))
        .route("/pages/{id}/descriptor", get(descriptor))
        .route("/pages/{id}/reference-query", get(reference_query))
        .route("/search", post(search))
        .route("/propagate", post(propagate))
        .route("/suggest", get(suggest))
        .route("/admin/ingest/run", post(ingest_run))
        .route("/admin/index/rebuild", post(index_rebuild))
        .with_state(state)
}

async fn healthz(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "index_seq": state.engine.index_seq() }))
}

async fn list_streams(State(state): State<Shared>) -> Json<Vec<DataStreamRecord>> {
    Json(state.engine.read(|s| s.streams().cloned().collect()))
}

async fn put_stream(
    State(state): State<Shared>,
    body: Result<Json<DataStreamRecord>, JsonRejection>,
) -> Result<(StatusCode, Json<DataStreamRecord>), ApiError> {
    let Json(record) = body?;
    let id = state.engine.write(|s| s.put_data_stream(record))?;
    let stored = state.engine.read(|s| s.stream(&id).cloned()).ok_or_else(|| ApiError::internal("stream vanished"))?;
    Ok((StatusCode::CREATED, Json(stored)))
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesBody {
    stream_id: StreamId,
    observations: Vec<propagator_ingest::Observation>,
}

async fn stream_data(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<SeriesBody> {
    let id = StreamId(id);
    if state.engine.read(|s| s.stream(&id).is_none()) {
        return Err(EngineError::not_found("stream", &id).into());
    }
    let path = cache_path(&state.config.series_dir(), &id);
    if !path.exists() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no cached data for stream {id}")));
    }
    let observations = read_series(&path).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(SeriesBody { stream_id: id, observations }))
}

async fn list_vis(State(state): State<Shared>) -> Json<Vec<VisFunctionRecord>> {
    Json(state.engine.read(|s| s.vis_functions().cloned().collect()))
}

async fn put_vis(
    State(state): State<Shared>,
    body: Result<Json<VisFunctionRecord>, JsonRejection>,
) -> Result<(StatusCode, Json<VisFunctionRecord>), ApiError> {
    let Json(record) = body?;
    let id = state.engine.write(|s| s.put_vis_function(record))?;
    let stored = state.engine.read(|s| s.vis_function(&id).cloned()).ok_or_else(|| ApiError::internal("vis vanished"))?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn list_pages(State(state): State<Shared>) -> Json<Vec<PageBinding>> {
    Json(state.engine.read(|s| s.pages().cloned().collect()))
}

async fn create_page(
    State(state): State<Shared>,
    body: Result<Json<NewPageBinding>, JsonRejection>,
) -> Result<(StatusCode, Json<PageBinding>), ApiError> {
    let Json(new) = body?;
    let page = state.engine.write(|s| s.create_page_binding(new))?;
    Ok((StatusCode::CREATED, Json(page)))
}

async fn get_page(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<PageBinding> {
    Ok(Json(state.engine.page(&PageId(id))?))
}

async fn descriptor(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<propagator_core::engine::PageDescriptor> {
    Ok(Json(state.engine.descriptor(&PageId(id))?))
}

async fn reference_query(State(state): State<Shared>, Path(id): Path<String>) -> ApiResult<PropagationQuery> {
    Ok(Json(state.engine.reference_query(&PageId(id))?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRequest {
    pub page_id: PageId,
    /// Defaults to the page's derived reference query.
    #[serde(default)]
    pub query: Option<PropagationQuery>,
    #[serde(default)]
    pub params: ParamsOverride,
}

async fn search(State(state): State<Shared>, body: Result<Json<SearchRequest>, JsonRejection>) -> ApiResult<SearchOutcome> {
    let Json(req) = body?;
    blocking(&state, move |st| {
        let params = req.params.apply(st.engine.defaults());
        Ok(Json(st.engine.search(&req.page_id, req.query.as_ref(), Some(&params))?))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagateRequest {
    pub page_id: PageId,
    pub group_hash: String,
    #[serde(default)]
    pub allow_missing_links: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagateResponse {
    pub record: PropagationRecord,
    pub page: PageBinding,
}

async fn propagate(
    State(state): State<Shared>,
    body: Result<Json<PropagateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<PropagateResponse>), ApiError> {
    let Json(req) = body?;
    blocking(&state, move |st| {
        let record = st.engine.activate_by_hash(&req.page_id, &req.group_hash, req.allow_missing_links)?;
        let page = st.engine.page(&record.new_page_id)?;
        Ok((StatusCode::CREATED, Json(PropagateResponse { record, page })))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct SuggestParams {
    #[serde(default)]
    prefix: String,
    #[serde(default = "default_limit")]
    limit: usize,
}

fn default_limit() -> usize {
    10
}

async fn suggest(
    State(state): State<Shared>,
    params: Result<Query<SuggestParams>, QueryRejection>,
) -> ApiResult<Vec<propagator_core::index::Suggestion>> {
    let Query(p) = params?;
    Ok(Json(state.engine.suggest(&p.prefix, p.limit)))
}

async fn ingest_run(State(state): State<Shared>) -> ApiResult<Vec<AgentReport>> {
    blocking(&state, |st| {
        let Some(dir) = st.config.manifests_dir.clone() else {
            return Err(ApiError::bad_request("no manifests_dir configured"));
        };
        let manifests = IngestManifest::load_dir(&dir).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let mut scheduler = st.scheduler.lock().unwrap_or_else(|e| e.into_inner());
        let reports = run_ingest(&st.engine, &st.config, &manifests, &mut scheduler);
        scheduler
            .save(&st.config.agent_state_path())
            .map_err(|e: IngestError| ApiError::internal(e.to_string()))?;
        Ok(Json(reports))
    })
    .await
}

async fn index_rebuild(State(state): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({ "index_seq": state.engine.rebuild_index() }))
}
