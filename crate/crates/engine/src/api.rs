//! JSON-over-HTTP service for uploads, job status, reports, review and
//! cohort statistics. Grading never runs on a request thread: submissions
//! are queued and their status is polled.

use std::net::SocketAddr;
use std::sync::Arc;

use autograde_core::report::{render_cohort_summary, CohortSummary};
use autograde_core::stats::ScoreDataset;
use autograde_core::{GradingRecord, QaStatus, ReviewAction, ReviewDecision, ReviewError, SubmissionRef, Timestamp};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::export::{compare_scores, read_scores, CompareOptions, SideSummary};
use crate::jobs::{Job, JobState};
use crate::orchestrator::{Engine, EngineError, ReviewFailure};
use crate::store::{valid_id, StoreError};

const BODY_LIMIT: usize = 64 << 20;

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(m: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, m.into())
    }
    fn not_found(m: impl Into<String>) -> Self {
        ApiError(StatusCode::NOT_FOUND, m.into())
    }
    fn internal(m: impl Into<String>) -> Self {
        ApiError(StatusCode::INTERNAL_SERVER_ERROR, m.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::InvalidId(_) => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Store(s) => s.into(),
            EngineError::UnknownAssignment(_) | EngineError::InvalidSubmissionId(_) => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/api/submissions", post(submit))
        .route("/api/jobs/{job_id}", get(job_status))
        .route("/api/submissions/{id}/report", get(report))
        .route("/api/review/queue", get(review_queue))
        .route("/api/review/{id}", post(review))
        .route("/api/cohort/{assignment_id}/summary", get(cohort_summary))
        .route("/api/cohort/{assignment_id}/stats", get(cohort_stats))
        .route("/api/uploads", post(upload))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(engine)
}

/// Serves until the listener fails.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr) -> std::io::Result<()> {
    serve_on(engine, tokio::net::TcpListener::bind(addr).await?).await
}

pub async fn serve_on(engine: Arc<Engine>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(engine)).await
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct Accepted {
    pub job_id: String,
    pub submission_id: String,
}

/// Keeps the final path component and replaces anything outside a safe
/// alphabet.
fn safe_file_name(name: &str) -> Option<String> {
    let base = name.rsplit(['/', '\\']).next().unwrap_or("");
    let cleaned: String = base
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    (!cleaned.is_empty() && !cleaned.starts_with('.') && !cleaned.ends_with(".ipynb")).then_some(cleaned)
}

async fn submit(State(engine): State<Arc<Engine>>, mut mp: Multipart) -> ApiResult<(StatusCode, Json<Accepted>)> {
    let mut notebook: Option<Vec<u8>> = None;
    let mut fields = std::collections::BTreeMap::<String, String>::new();
    let mut attachments: Vec<(String, Vec<u8>)> = Vec::new();
    while let Some(field) = mp.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        let name = field.name().unwrap_or("").to_string();
        let file_name = field.file_name().map(str::to_string);
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?.to_vec();
        match (name.as_str(), file_name) {
            ("notebook", _) => notebook = Some(bytes),
            ("assignment_id" | "student_id" | "submission_id", None) => {
                let v = String::from_utf8(bytes).map_err(|_| ApiError::bad_request(format!("{name} is not UTF-8")))?;
                fields.insert(name, v.trim().to_string());
            }
            (_, Some(f)) => {
                let f = safe_file_name(&f).ok_or_else(|| ApiError::bad_request(format!("unusable attachment name {f:?}")))?;
                attachments.push((f, bytes));
            }
            (other, None) => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }
    let notebook = notebook.ok_or_else(|| ApiError::bad_request("missing notebook field"))?;
    let assignment_id = fields.remove("assignment_id").filter(|s| !s.is_empty()).ok_or_else(|| ApiError::bad_request("missing assignment_id"))?;
    if engine.rubric(&assignment_id).is_none() {
        return Err(ApiError::bad_request(format!("no rubric loaded for assignment {assignment_id:?}")));
    }
    let submission_id = fields
        .remove("submission_id")
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    if !valid_id(&submission_id) {
        return Err(ApiError::bad_request(format!("invalid submission_id {submission_id:?}")));
    }
    let student_id = fields.remove("student_id").filter(|s| !s.is_empty()).unwrap_or_else(|| submission_id.clone());

    let job = blocking(move || -> ApiResult<Job> {
        let dir = engine.store().intake_dir(&submission_id)?;
        let nb_path = dir.join(format!("{submission_id}.ipynb"));
        let write = |p: &std::path::Path, b: &[u8]| std::fs::write(p, b).map_err(|e| ApiError::internal(e.to_string()));
        write(&nb_path, &notebook)?;
        for (name, bytes) in &attachments {
            write(&dir.join(name), bytes)?;
        }
        Ok(engine.submit(SubmissionRef {
            submission_id,
            student_id,
            source_path: nb_path.to_string_lossy().into_owned(),
            assignment_id,
        })?)
    })
    .await??;
    Ok((
        StatusCode::ACCEPTED,
        Json(Accepted { job_id: job.job_id, submission_id: job.submission.submission_id }),
    ))
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct JobView {
    pub job_id: String,
    pub submission_id: String,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
}

async fn job_status(State(engine): State<Arc<Engine>>, Path(job_id): Path<String>) -> ApiResult<Json<JobView>> {
    let job = engine.job(&job_id).ok_or_else(|| ApiError::not_found(format!("unknown job {job_id:?}")))?;
    Ok(Json(JobView {
        job_id: job.job_id,
        submission_id: job.submission.submission_id,
        state: job.state,
        error_detail: job.error_detail,
    }))
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct ReportView {
    pub submission_id: String,
    pub under_review: bool,
    pub markdown: String,
}

async fn report(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<Json<ReportView>> {
    let view = blocking(move || -> ApiResult<ReportView> {
        let record = engine.store().load_record(&id)?;
        Ok(ReportView {
            under_review: record.awaiting_review(),
            markdown: engine.report(&id)?,
            submission_id: id,
        })
    })
    .await??;
    Ok(Json(view))
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct QueueItem {
    pub submission_id: String,
    pub student_id: String,
    pub assignment_id: String,
    pub flag_reasons: Vec<String>,
    pub internal_total: f64,
    pub total_possible: f64,
    pub created_at: Timestamp,
}

async fn review_queue(State(engine): State<Arc<Engine>>) -> ApiResult<Json<Vec<QueueItem>>> {
    let q = blocking(move || engine.review_queue()).await?;
    Ok(Json(
        q.into_iter()
            .map(|r| QueueItem {
                submission_id: r.submission.submission_id,
                student_id: r.submission.student_id,
                assignment_id: r.submission.assignment_id,
                flag_reasons: r.flag_reasons,
                internal_total: r.total_awarded,
                total_possible: r.total_possible,
                created_at: r.created_at,
            })
            .collect(),
    ))
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct ReviewRequest {
    pub reviewer_id: String,
    pub action: ReviewAction,
    #[serde(default)]
    pub override_score: Option<f64>,
    #[serde(default)]
    pub note: String,
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct RecordSummary {
    pub submission_id: String,
    pub qa_status: QaStatus,
    pub exposed_score: f64,
    pub total_possible: f64,
    pub review: Option<ReviewDecision>,
}

impl From<&GradingRecord> for RecordSummary {
    fn from(r: &GradingRecord) -> Self {
        RecordSummary {
            submission_id: r.submission.submission_id.clone(),
            qa_status: r.qa_status,
            exposed_score: r.exposed_score(),
            total_possible: r.total_possible,
            review: r.review.clone(),
        }
    }
}

async fn review(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Json(req): Json<ReviewRequest>,
) -> ApiResult<Json<RecordSummary>> {
    if req.reviewer_id.trim().is_empty() {
        return Err(ApiError::bad_request("reviewer_id is required"));
    }
    let decision = ReviewDecision {
        reviewer_id: req.reviewer_id,
        action: req.action,
        override_score: req.override_score,
        note: req.note,
        decided_at: crate::now(),
    };
    let record = blocking(move || engine.review(&id, decision)).await?.map_err(|e| match e {
        ReviewFailure::Invalid(ReviewError::NotFlagged) => ApiError(StatusCode::CONFLICT, e.to_string()),
        ReviewFailure::Invalid(_) => ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        ReviewFailure::Store(s) => s.into(),
        ReviewFailure::Stopped => ApiError::internal(e.to_string()),
    })?;
    Ok(Json(RecordSummary::from(&record)))
}

fn cohort_records(engine: &Engine, assignment_id: &str) -> Vec<GradingRecord> {
    engine
        .store()
        .records()
        .into_iter()
        .filter(|r| r.submission.assignment_id == assignment_id)
        .collect()
}

async fn cohort_summary(State(engine): State<Arc<Engine>>, Path(aid): Path<String>) -> ApiResult<Json<CohortSummary>> {
    let summary = blocking(move || -> ApiResult<CohortSummary> {
        let rubric = engine.rubric(&aid).ok_or_else(|| ApiError::not_found(format!("no rubric for {aid:?}")))?;
        let records = cohort_records(&engine, &aid);
        render_cohort_summary(&records, &rubric).map_err(|e| ApiError::not_found(e.to_string()))
    })
    .await??;
    Ok(Json(summary))
}

#[derive(Deserialize, Debug)]
pub struct StatsQuery {
    pub other: Option<String>,
    #[serde(default)]
    pub exclude_zeros: bool,
    pub normalize_to_max: Option<f64>,
    /// Join column: `submission_id` or `student_id`.
    pub key: Option<String>,
}

async fn cohort_stats(
    State(engine): State<Arc<Engine>>,
    Path(aid): Path<String>,
    Query(q): Query<StatsQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let v = blocking(move || -> ApiResult<serde_json::Value> {
        let rubric = engine.rubric(&aid).ok_or_else(|| ApiError::not_found(format!("no rubric for {aid:?}")))?;
        let records = cohort_records(&engine, &aid);
        let key = q.key.as_deref().unwrap_or("submission_id");
        let entries: Vec<(String, f64)> = records
            .iter()
            .map(|r| {
                let id = if key == "student_id" { &r.submission.student_id } else { &r.submission.submission_id };
                (id.clone(), r.exposed_score())
            })
            .collect();
        let engine_scores = ScoreDataset::new("engine", entries).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let domain = q.normalize_to_max.unwrap_or(rubric.total_points);
        match q.other {
            None => {
                let opts = CompareOptions { exclude_zeros: q.exclude_zeros, normalize_to_max: None, domain_max: Some(domain) };
                let c = compare_scores(&engine_scores, &engine_scores, opts);
                let side: SideSummary = c.a;
                Ok(json!({"engine": side}))
            }
            Some(upload) => {
                let bytes = engine.store().load_upload(&upload)?;
                let text = String::from_utf8(bytes).map_err(|_| ApiError::bad_request("upload is not UTF-8"))?;
                let other = read_scores(&text, "uploaded", Some(key)).map_err(|e| ApiError::bad_request(e.to_string()))?;
                let opts = CompareOptions {
                    exclude_zeros: q.exclude_zeros,
                    normalize_to_max: q.normalize_to_max,
                    domain_max: Some(domain),
                };
                let c = compare_scores(&other, &engine_scores, opts);
                serde_json::to_value(c).map_err(|e| ApiError::internal(e.to_string()))
            }
        }
    })
    .await??;
    Ok(Json(v))
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct UploadAccepted {
    pub upload_id: String,
    pub rows: usize,
}

/// Accepts a score CSV as the raw request body.
async fn upload(State(engine): State<Arc<Engine>>, body: axum::body::Bytes) -> ApiResult<(StatusCode, Json<UploadAccepted>)> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("upload is not UTF-8"))?;
    let ds = read_scores(text, "uploaded", None).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let rows = ds.len();
    let bytes = body.to_vec();
    let upload_id = blocking(move || engine.store().store_upload(&bytes)).await??;
    Ok((StatusCode::CREATED, Json(UploadAccepted { upload_id, rows })))
}
