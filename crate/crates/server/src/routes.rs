use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relaq_core::datamodel::{self, parse_config, parse_dataset, MetaLabels};
use relaq_core::matcher::{execute_query, MatchConfig};
use relaq_core::preprocess::{parse_word, preprocess, Artifacts};
use relaq_core::querymodel::parse_query;
use relaq_core::recommender::{recommend, RecommendConfig};
use relaq_core::store::dataset_id;
use relaq_core::wire::{DatasetHandle, GuidanceRequest, TrendSuggestion, UploadParams};
use serde::Deserialize;
use tower_http::cors::CorsLayer;

use crate::{ApiError, AppState};

/// Uploads can be large; queries and guidance bodies are small.
const UPLOAD_LIMIT: usize = 1 << 30;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { "ok" }))
        .route("/v1/datasets", post(upload).get(list))
        .route("/v1/datasets/{id}/status", get(status))
        .route("/v1/datasets/{id}/queries", post(query))
        .route("/v1/datasets/{id}/guidance", post(guidance))
        .route("/v1/datasets/{id}/trend-suggestions", get(global_suggestions))
        .route("/v1/datasets/{id}/series/{name}/trend-suggestions", get(series_suggestions))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

fn dataset(state: &AppState, id: &str) -> Result<Arc<Artifacts>, ApiError> {
    state.get(id).ok_or_else(|| ApiError::not_found(format!("no dataset {id:?}")))
}

fn handle(id: &str, artifacts: &Artifacts) -> DatasetHandle {
    DatasetHandle {
        id: id.to_string(),
        params: artifacts.params,
        step_unit: artifacts.dataset.step_unit().to_string(),
        series: artifacts.dataset.series_count(),
        length: artifacts.dataset.len(),
        status: artifacts.status(),
        warnings: datamodel::validate(&artifacts.dataset, &artifacts.labels),
    }
}

/// Pre-serialized JSON, so every response body comes from one serializer call.
fn json_body<T: serde::Serialize>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_string(value).expect("responses serialize");
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

async fn list(State(state): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(state.ids())
}

async fn upload(State(state): State<Arc<AppState>>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut data = None;
    let mut config = Vec::new();
    let mut params = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request("MalformedMultipart", e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request("MalformedMultipart", e.to_string()))?;
        match name.as_str() {
            "data" => data = Some(bytes.to_vec()),
            "config" => config = bytes.to_vec(),
            "params" => {
                let p: UploadParams = serde_json::from_slice(&bytes).map_err(|e| {
                    let mut err = ApiError::bad_request("InvalidParams", e.to_string());
                    err.body.path = Some("params".into());
                    err
                })?;
                params = Some(p);
            }
            _ => {}
        }
    }
    let data = data.ok_or_else(|| ApiError::bad_request("MissingPart", "multipart field `data` is required"))?;
    let params = params.ok_or_else(|| ApiError::bad_request("MissingPart", "multipart field `params` is required"))?;
    let pre = params.preprocess();
    pre.check()?;

    let id = dataset_id(&data, &config, pre, &params.step_unit);
    if let Some(existing) = state.get(&id) {
        return Ok(json_body(StatusCode::CREATED, &handle(&id, &existing)));
    }
    let build = state.config.build.clone();
    let artifacts = blocking(move || -> Result<Arc<Artifacts>, ApiError> {
        let text = String::from_utf8(data).map_err(|e| ApiError::bad_request("MalformedCsv", e.to_string()))?;
        let dataset = parse_dataset(&text)?.with_step_unit(params.step_unit);
        let labels = if config.is_empty() {
            MetaLabels::default()
        } else {
            let text = String::from_utf8(config).map_err(|e| ApiError::bad_request("MalformedCsv", e.to_string()))?;
            parse_config(&text)?
        };
        if pre.window_symbols() > pre.compressed_len(dataset.len()) {
            return Err(ApiError::bad_request(
                "WindowTooLong",
                format!("box length {} exceeds the series length {}", pre.box_length, dataset.len()),
            ));
        }
        preprocess(dataset, labels, pre, &build).map_err(|e| ApiError::bad_request("PreprocessFailed", e.to_string()))
    })
    .await??;
    state.insert(id.clone(), Arc::clone(&artifacts));
    state.persist_later(&id, Arc::clone(&artifacts));
    tracing::info!(dataset = %id, "dataset ready");
    Ok(json_body(StatusCode::CREATED, &handle(&id, &artifacts)))
}

async fn status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json_body(StatusCode::OK, &dataset(&state, &id)?.status()))
}

/// Sets the flag when dropped, which stops a search whose client went away.
struct CancelOnDrop(Arc<AtomicBool>);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

async fn query(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let artifacts = dataset(&state, &id)?;
    let q = parse_query(&body)?;
    let cancel = Arc::new(AtomicBool::new(false));
    let _guard = CancelOnDrop(Arc::clone(&cancel));
    let config = MatchConfig {
        deadline: Some(Instant::now() + state.config.query_timeout),
        cancel: Some(cancel),
        ..MatchConfig::default()
    };
    let response = blocking(move || execute_query(&q, &artifacts, &config)).await??;
    Ok(json_body(StatusCode::OK, &response))
}

async fn guidance(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: String) -> Result<Response, ApiError> {
    let artifacts = dataset(&state, &id)?;
    let request = parse_guidance(&body)?;
    let cancel = Arc::new(AtomicBool::new(false));
    let _guard = CancelOnDrop(Arc::clone(&cancel));
    let config = RecommendConfig {
        max_lag_steps: request.max_lag_steps,
        matching: MatchConfig {
            deadline: Some(Instant::now() + state.config.query_timeout),
            cancel: Some(cancel),
            ..MatchConfig::default()
        },
        ..RecommendConfig::default()
    };
    let matrix = blocking(move || recommend(&request.query, &request.focus, &artifacts, &config)).await??;
    Ok(json_body(StatusCode::OK, &matrix))
}

fn schema(path: &str, detail: impl Into<String>) -> ApiError {
    let mut err = ApiError::bad_request("SchemaViolation", detail);
    err.body.path = Some(path.into());
    err
}

/// Parse a guidance body; the nested query goes through the query parser so
/// its errors carry pointers like `/query/relalinks/0/kind`.
fn parse_guidance(body: &str) -> Result<GuidanceRequest, ApiError> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| schema("/", e.to_string()))?;
    let query = value.get("query").ok_or_else(|| schema("/query", "missing field `query`"))?;
    let query = parse_query(&query.to_string()).map_err(|e| {
        let mut err = ApiError::from(e);
        err.body.path = err.body.path.map(|p| format!("/query{p}"));
        err
    })?;
    let focus = value
        .get("focus")
        .and_then(|f| f.as_str())
        .ok_or_else(|| schema("/focus", "missing string field `focus`"))?
        .to_string();
    let max_lag_steps = match value.get("maxLagSteps") {
        None | Some(serde_json::Value::Null) => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| schema("/maxLagSteps", "expected a non-negative integer"))? as usize),
    };
    Ok(GuidanceRequest { query, focus, max_lag_steps })
}

#[derive(Debug, Deserialize)]
struct PrefixParam {
    #[serde(default)]
    prefix: String,
}

fn suggestions(artifacts: &Artifacts, series: Option<&str>, prefix: &str) -> Result<Response, ApiError> {
    let symbols = parse_word(prefix).ok_or_else(|| {
        let mut err = ApiError::bad_request("InvalidPrefix", format!("{prefix:?} is not a word over a-d"));
        err.body.path = Some("prefix".into());
        err
    })?;
    let next = artifacts
        .suggest_next_symbols(series, &symbols)
        .ok_or_else(|| ApiError::not_found(format!("no series {:?}", series.unwrap_or_default())))?;
    let body: Vec<TrendSuggestion> = next.into_iter().map(|(s, ratio)| TrendSuggestion { symbol: s.as_char(), ratio }).collect();
    Ok(json_body(StatusCode::OK, &body))
}

async fn series_suggestions(
    State(state): State<Arc<AppState>>,
    Path((id, name)): Path<(String, String)>,
    Query(p): Query<PrefixParam>,
) -> Result<Response, ApiError> {
    let artifacts = dataset(&state, &id)?;
    suggestions(&artifacts, Some(&name), &p.prefix)
}

async fn global_suggestions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(p): Query<PrefixParam>,
) -> Result<Response, ApiError> {
    let artifacts = dataset(&state, &id)?;
    suggestions(&artifacts, None, &p.prefix)
}
