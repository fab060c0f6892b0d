// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

//! JSON-over-HTTP interface under `/v1`.
//!
//! | method | route | success |
//! |---|---|---|
//! | GET | `/v1/apl?offset=&limit=` | 200 `[AplEntry]` |
//! | GET | `/v1/apl/search?q=` | 200 `[AplEntry]` |
//! | GET | `/v1/apl/trending?n=` | 200 `[TrendingEntry]` |
//! | GET | `/v1/apl/{kw}/evolution?from=&to=` | 200 `[WindowAggregate]` |
//! | GET | `/v1/apl/{kw}/next?after=` | 200 `WindowAggregate`, 204 when none |
//! | DELETE | `/v1/apl/{kw}` | 200 `{"deleted": kw}` |
//! | POST | `/v1/apl` `{keyword, lang}` | 201 `AplEntry` |
//! | POST | `/v1/queries` `Query` | 202 `{"query_id": id}` |
//! | GET | `/v1/queries/search?q=` | 200 `[QuerySummary]` |
//! | GET | `/v1/queries/{id}/results` | 200 `QueryRecord` |
//! | GET | `/v1/health` | 200 `{"status": "ok"}` |
//! | GET | `/v1/stats` | 200 `ServiceStats` |
//!
//! Every other status carries one [`ApiError`] body.

mod error;

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get};
use axum::{middleware, Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};

use sentiflow_core::aggregate::apl::{trending, TrendingEntry};
use sentiflow_core::aggregate::ondemand::QueryManager;
use sentiflow_core::aggregate::results::{AplEntry, ResultsStore};
use sentiflow_core::aggregate::Query as AggQuery;
use sentiflow_core::clock::SharedClock;
use sentiflow_core::config::ApiConfig;

pub use error::{ApiError, ErrorCode};

pub const DEFAULT_PAGE: usize = 100;
pub const DEFAULT_TRENDING: usize = 10;

/// Counters reported by `/v1/stats`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub posts_stored: u64,
    pub input_pending: u64,
    pub output_pending: u64,
    pub drained_total: u64,
    pub failed_total: u64,
}

pub type StatsFn = Arc<dyn Fn() -> ServiceStats + Send + Sync>;

/// Shared handles behind every handler. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    results: Arc<ResultsStore>,
    queries: Arc<QueryManager>,
    clock: SharedClock,
    stats: StatsFn,
}

impl AppState {
    pub fn new(results: Arc<ResultsStore>, queries: Arc<QueryManager>, clock: SharedClock) -> Self {
        Self {
            results,
            queries,
            clock,
            stats: Arc::new(ServiceStats::default),
        }
    }

    pub fn with_stats(mut self, stats: StatsFn) -> Self {
        self.stats = stats;
        self
    }

    pub fn results(&self) -> &Arc<ResultsStore> {
        &self.results
    }

    pub fn queries(&self) -> &Arc<QueryManager> {
        &self.queries
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs a store call off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("handler task failed: {e}")))?
}

fn bad_query(r: QueryRejection) -> ApiError {
    ApiError::bad_request(r.body_text())
}

fn bad_path(r: PathRejection) -> ApiError {
    ApiError::bad_request(r.body_text())
}

fn bad_json(r: JsonRejection) -> ApiError {
    ApiError::bad_request(r.body_text())
}

#[derive(Debug, Deserialize)]
struct PageParams {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct SearchParams {
    #[serde(default)]
    q: String,
}

#[derive(Debug, Deserialize)]
struct TrendingParams {
    n: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RangeParams {
    from: Option<u64>,
    to: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct AfterParams {
    after: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewAplEntry {
    pub keyword: String,
    #[serde(default = "default_lang")]
    pub lang: String,
}

fn default_lang() -> String {
    "en".into()
}

async fn list_apl(State(s): State<AppState>, p: Result<Query<PageParams>, QueryRejection>) -> ApiResult<Json<Vec<AplEntry>>> {
    let Query(p) = p.map_err(bad_query)?;
    let offset = p.offset.unwrap_or(0);
    let limit = p.limit.unwrap_or(DEFAULT_PAGE);
    blocking(move || Ok(Json(s.results.apl_list(offset, limit)?))).await
}

async fn search_apl(State(s): State<AppState>, p: Result<Query<SearchParams>, QueryRejection>) -> ApiResult<Json<Vec<AplEntry>>> {
    let Query(p) = p.map_err(bad_query)?;
    blocking(move || Ok(Json(s.results.apl_search(&p.q)?))).await
}

async fn trending_apl(
    State(s): State<AppState>,
    p: Result<Query<TrendingParams>, QueryRejection>,
) -> ApiResult<Json<Vec<TrendingEntry>>> {
    let Query(p) = p.map_err(bad_query)?;
    let n = p.n.unwrap_or(DEFAULT_TRENDING);
    if n == 0 {
        return Err(ApiError::bad_request("n must be at least 1"));
    }
    blocking(move || Ok(Json(trending(&s.results, n, s.clock.now_ms())?))).await
}

fn require_entry(results: &ResultsStore, keyword: &str) -> ApiResult<AplEntry> {
    results
        .apl_get(keyword)?
        .ok_or_else(|| ApiError::not_found(format!("`{keyword}` is not on the APL")))
}

async fn evolution(
    State(s): State<AppState>,
    kw: Result<Path<String>, PathRejection>,
    p: Result<Query<RangeParams>, QueryRejection>,
) -> ApiResult<Response> {
    let Path(kw) = kw.map_err(bad_path)?;
    let Query(p) = p.map_err(bad_query)?;
    let from = p.from.unwrap_or(0);
    let to = p.to.unwrap_or(u64::MAX);
    if from >= to {
        return Err(ApiError::bad_request("`from` must be before `to`"));
    }
    blocking(move || {
        require_entry(&s.results, &kw)?;
        Ok(Json(s.results.evolution(&kw, from, to)?).into_response())
    })
    .await
}

async fn next_measure(
    State(s): State<AppState>,
    kw: Result<Path<String>, PathRejection>,
    p: Result<Query<AfterParams>, QueryRejection>,
) -> ApiResult<Response> {
    let Path(kw) = kw.map_err(bad_path)?;
    let Query(p) = p.map_err(bad_query)?;
    let after = p.after.unwrap_or(0);
    blocking(move || {
        require_entry(&s.results, &kw)?;
        Ok(match s.results.next_after(&kw, after)? {
            Some(row) => Json(row).into_response(),
            None => StatusCode::NO_CONTENT.into_response(),
        })
    })
    .await
}

async fn delete_apl(State(s): State<AppState>, kw: Result<Path<String>, PathRejection>) -> ApiResult<Json<serde_json::Value>> {
    let Path(kw) = kw.map_err(bad_path)?;
    delete_named(State(s), kw).await
}

/// Keywords that collide with static routes (`search`, `trending`) are
/// deleted through those routes.
async fn delete_named(State(s): State<AppState>, kw: impl Into<String>) -> ApiResult<Json<serde_json::Value>> {
    let kw = kw.into();
    blocking(move || {
        s.results.apl_delete(&kw)?;
        Ok(Json(serde_json::json!({ "deleted": kw })))
    })
    .await
}

async fn add_apl(State(s): State<AppState>, body: Result<Json<NewAplEntry>, JsonRejection>) -> ApiResult<Response> {
    let Json(body) = body.map_err(bad_json)?;
    blocking(move || {
        let entry = s.results.apl_add(&body.keyword, &body.lang, s.clock.now_ms())?;
        Ok((StatusCode::CREATED, Json(entry)).into_response())
    })
    .await
}

async fn submit_query(State(s): State<AppState>, body: Result<Json<AggQuery>, JsonRejection>) -> ApiResult<Response> {
    let Json(query) = body.map_err(bad_json)?;
    blocking(move || {
        let id = s.queries.submit(query)?;
        Ok((StatusCode::ACCEPTED, Json(serde_json::json!({ "query_id": id }))).into_response())
    })
    .await
}

async fn search_queries(State(s): State<AppState>, p: Result<Query<SearchParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(p) = p.map_err(bad_query)?;
    blocking(move || Ok(Json(s.queries.search(&p.q)?).into_response())).await
}

async fn query_results(State(s): State<AppState>, id: Result<Path<u64>, PathRejection>) -> ApiResult<Response> {
    let Path(id) = id.map_err(bad_path)?;
    blocking(move || match s.queries.status(id)? {
        Some(record) => Ok(Json(record).into_response()),
        None => Err(ApiError::not_found(format!("no query with id {id}"))),
    })
    .await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn stats(State(s): State<AppState>) -> Json<ServiceStats> {
    Json((s.stats)())
}

async fn unknown_route() -> ApiError {
    ApiError::not_found("no such route")
}

/// Rewrites bodyless framework errors (such as 405) into an [`ApiError`].
async fn ensure_error_body(response: Response) -> Response {
    let status = response.status();
    if !(status.is_client_error() || status.is_server_error()) {
        return response;
    }
    let is_json = response
        .headers()
        .get(header::CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().starts_with(b"application/json"));
    if is_json {
        return response;
    }
    let code = match status {
        StatusCode::NOT_FOUND => ErrorCode::NotFound,
        StatusCode::CONFLICT => ErrorCode::Conflict,
        s if s.is_server_error() => ErrorCode::Internal,
        _ => ErrorCode::BadRequest,
    };
    let message = status.canonical_reason().unwrap_or("request failed").to_lowercase();
    let mut out = ApiError::new(code, message).into_response();
    *out.status_mut() = status;
    out
}

/// The `/v1` routes alone, without CORS or static files.
pub fn router(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/apl", get(list_apl).post(add_apl))
        .route("/apl/search", get(search_apl).delete(|s: State<AppState>| delete_named(s, "search")))
        .route("/apl/trending", get(trending_apl).delete(|s: State<AppState>| delete_named(s, "trending")))
        .route("/apl/:kw", delete(delete_apl))
        .route("/apl/:kw/evolution", get(evolution))
        .route("/apl/:kw/next", get(next_measure))
        .route("/queries", axum::routing::post(submit_query))
        .route("/queries/search", get(search_queries))
        .route("/queries/:id/results", get(query_results))
        .route("/health", get(health))
        .route("/stats", get(stats))
        .fallback(unknown_route)
        .with_state(state);
    Router::new()
        .nest("/v1", v1)
        .layer(middleware::map_response(ensure_error_body))
}

fn cors(origins: &[String]) -> Result<CorsLayer, ApiError> {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);
    if origins.is_empty() {
        return Ok(layer.allow_origin(Any));
    }
    let parsed = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|_| ApiError::bad_request(format!("bad CORS origin `{o}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(layer.allow_origin(AllowOrigin::list(parsed)))
}

/// Full application: `/v1` routes, CORS and, when configured, the UI's
/// static files at `/`.
pub fn app(state: AppState, config: &ApiConfig) -> Result<Router, ApiError> {
    let mut app = router(state);
    if let Some(dir) = &config.ui_dir {
        let index = dir.join("index.html");
        app = app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)));
    }
    Ok(app.layer(cors(&config.cors_origins)?))
}

/// Serves `app` until `shutdown` resolves, then finishes in-flight requests.
pub async fn serve<F>(listener: tokio::net::TcpListener, app: Router, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
