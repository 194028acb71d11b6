use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mdbench_core::checks::run_test;
use mdbench_core::runner::{load_candidate, CandidateDoc, DocStatus};
use mdbench_core::{Category, Outcome, TestResult, UnitTest};
use mdbench_gateway::Rasterizer;

use crate::audit::{audit_summary, AuditSummary, ReviewRecord, ReviewStore};
use crate::error::Error;
use crate::store::{TestPatch, TestStore};
use crate::views::{field_diffs, CandidateView, DiffView, TestDetail, TestView};

/// Resolution of page images served to reviewers.
pub const REVIEW_DPI: u32 = 150;

/// Shared server state.
pub struct AppState {
    pub(crate) tests: RwLock<TestStore>,
    pub(crate) reviews: Mutex<ReviewStore>,
    pub(crate) candidates: PathBuf,
    pub(crate) pdf_dir: Option<PathBuf>,
    pub(crate) rasterizer: Option<Arc<Rasterizer>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{} not found", what.into()))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Path components must not escape the candidate directory.
fn safe_component(kind: &str, value: &str) -> ApiResult<()> {
    let ok = !value.is_empty() && value != "." && value != ".." && !value.contains(['/', '\\', '\0']);
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("invalid {kind} `{value}`")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

fn evaluate(test: &UnitTest, doc: Option<&CandidateDoc>, model: &str) -> TestResult {
    match doc {
        Some(doc) if doc.status == DocStatus::Ok => run_test(test, &doc.markdown, model),
        _ => TestResult::no_candidate(test, model),
    }
}

fn find_test(state: &AppState, id: &str) -> ApiResult<UnitTest> {
    state.tests.read().get(id).cloned().ok_or_else(|| ApiError::not_found(format!("test `{id}`")))
}

#[derive(Debug, Default, Deserialize)]
pub struct ListQuery {
    pub category: Option<String>,
    /// `failing`, `passing`, `invalid` or `all`; needs `model`.
    pub status: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ModelQuery {
    pub model: Option<String>,
}

async fn list_tests(State(state): State<Arc<AppState>>, Query(q): Query<ListQuery>) -> ApiResult<Json<Vec<TestView>>> {
    let category = q
        .category
        .as_deref()
        .filter(|c| !c.is_empty())
        .map(str::parse::<Category>)
        .transpose()
        .map_err(ApiError::bad_request)?;
    let wanted = match q.status.as_deref().unwrap_or("all") {
        "" | "all" => None,
        "failing" | "fail" => Some(Outcome::Fail),
        "passing" | "pass" => Some(Outcome::Pass),
        "invalid" => Some(Outcome::Invalid),
        other => return Err(ApiError::bad_request(format!("unknown status filter `{other}`"))),
    };
    let model = q.model.filter(|m| !m.is_empty());
    if wanted.is_some() && model.is_none() {
        return Err(ApiError::bad_request("status filter needs a model"));
    }
    if let Some(m) = &model {
        safe_component("model", m)?;
    }
    let tests: Vec<UnitTest> =
        state.tests.read().iter().filter(|t| category.is_none_or(|c| t.category == c)).cloned().collect();

    let Some(model) = model else {
        return Ok(Json(tests.iter().map(|t| TestView::new(t, None)).collect()));
    };
    let root = state.candidates.clone();
    let views = blocking(move || {
        let mut docs: HashMap<String, Option<CandidateDoc>> = HashMap::new();
        tests
            .iter()
            .filter_map(|t| {
                let doc = docs.entry(t.doc_id.clone()).or_insert_with(|| load_candidate(&root, &model, &t.doc_id));
                let result = evaluate(t, doc.as_ref(), &model);
                wanted.is_none_or(|w| result.status == w).then(|| TestView::new(t, Some(result)))
            })
            .collect::<Vec<_>>()
    })
    .await?;
    Ok(Json(views))
}

async fn evaluate_with(state: &AppState, test: &UnitTest, model: Option<String>) -> ApiResult<Option<TestResult>> {
    let Some(model) = model.filter(|m| !m.is_empty()) else {
        return Ok(None);
    };
    safe_component("model", &model)?;
    let root = state.candidates.clone();
    let test = test.clone();
    blocking(move || {
        let doc = load_candidate(&root, &model, &test.doc_id);
        Some(evaluate(&test, doc.as_ref(), &model))
    })
    .await
}

async fn get_test(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ModelQuery>,
) -> ApiResult<Json<TestDetail>> {
    let test = find_test(&state, &id)?;
    let result = evaluate_with(&state, &test, q.model).await?;
    let history = state.tests.read().history(&id);
    Ok(Json(TestDetail { view: TestView::new(&test, result), history }))
}

async fn patch_test(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ModelQuery>,
    body: Json<Value>,
) -> ApiResult<Json<TestView>> {
    let patch: TestPatch = serde_json::from_value(body.0)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("bad patch: {e}")))?;
    let updated = state.tests.write().update(&id, &patch, now())?;
    let result = evaluate_with(&state, &updated, q.model).await?;
    Ok(Json(TestView::new(&updated, result)))
}

async fn test_diff(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ModelQuery>,
) -> ApiResult<Json<DiffView>> {
    let test = find_test(&state, &id)?;
    let model = q.model.filter(|m| !m.is_empty()).ok_or_else(|| ApiError::bad_request("diff needs a model"))?;
    safe_component("model", &model)?;
    let root = state.candidates.clone();
    let view = blocking(move || {
        let doc = load_candidate(&root, &model, &test.doc_id);
        let result = evaluate(&test, doc.as_ref(), &model);
        let usable = doc.as_ref().filter(|d| d.status == DocStatus::Ok).map_or("", |d| d.markdown.as_str());
        let (normalized_candidate, fields) = field_diffs(&test, usable);
        DiffView {
            test_id: test.id.clone(),
            model,
            result,
            candidate_status: doc.map(|d| d.status),
            normalized_candidate,
            fields,
        }
    })
    .await?;
    Ok(Json(view))
}

async fn get_candidate(
    State(state): State<Arc<AppState>>,
    Path((doc_id, model)): Path<(String, String)>,
) -> ApiResult<Json<CandidateView>> {
    safe_component("document id", &doc_id)?;
    safe_component("model", &model)?;
    let root = state.candidates.clone();
    let label = format!("output of `{model}` for `{doc_id}`");
    let doc = blocking(move || load_candidate(&root, &model, &doc_id)).await?;
    doc.map(|d| Json(CandidateView::from(d))).ok_or_else(|| ApiError::not_found(label))
}

async fn page_image(State(state): State<Arc<AppState>>, Path(doc_id): Path<String>) -> ApiResult<Response> {
    let (pdf, page) = state
        .tests
        .read()
        .iter()
        .find(|t| t.doc_id == doc_id)
        .map(|t| (t.pdf.clone(), t.page))
        .ok_or_else(|| ApiError::not_found(format!("document `{doc_id}`")))?;
    let (Some(dir), Some(rasterizer)) = (state.pdf_dir.clone(), state.rasterizer.clone()) else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "page images are not configured"));
    };
    let png = blocking(move || rasterizer.rasterize(&dir.join(pdf), page, REVIEW_DPI))
        .await?
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Serialize)]
struct ReviewAck {
    stored: bool,
    record: ReviewRecord,
}

async fn post_review(
    State(state): State<Arc<AppState>>,
    body: Json<Value>,
) -> ApiResult<(StatusCode, Json<ReviewAck>)> {
    let mut record: ReviewRecord = serde_json::from_value(body.0)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("bad review: {e}")))?;
    if state.tests.read().get(&record.test_id).is_none() {
        return Err(ApiError::not_found(format!("test `{}`", record.test_id)));
    }
    if record.timestamp.is_empty() {
        record.timestamp = now();
    }
    let stored = state.reviews.lock().record(record.clone())?;
    let status = if stored { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(ReviewAck { stored, record })))
}

async fn get_reviews(State(state): State<Arc<AppState>>) -> Json<Vec<ReviewRecord>> {
    Json(state.reviews.lock().records().to_vec())
}

async fn get_audit(State(state): State<Arc<AppState>>) -> Json<AuditSummary> {
    Json(audit_summary(state.reviews.lock().records()))
}

/// Model directories present under the candidate root.
async fn list_models(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<String>>> {
    let root = state.candidates.clone();
    let models = blocking(move || {
        let mut names: Vec<String> = std::fs::read_dir(&root)
            .map(|entries| {
                entries
                    .filter_map(|e| e.ok())
                    .filter(|e| e.path().is_dir())
                    .filter_map(|e| e.file_name().into_string().ok())
                    .collect()
            })
            .unwrap_or_default();
        names.sort();
        names
    })
    .await?;
    Ok(Json(models))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/tests", get(list_tests))
        .route("/tests/{id}", get(get_test).patch(patch_test))
        .route("/tests/{id}/diff", get(test_diff))
        .route("/docs/{id}/image", get(page_image))
        .route("/docs/{id}/candidate/{model}", get(get_candidate))
        .route("/reviews", post(post_review).get(get_reviews))
        .route("/audit/summary", get(get_audit))
        .route("/models", get(list_models))
        .with_state(state)
}
