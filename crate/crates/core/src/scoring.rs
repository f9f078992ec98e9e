//! Module scoring, aggregation and the review protocol.
//!
//! A record with any failed or skipped scored module is flagged. Flagged
//! records keep their partial total for reviewers but expose a score of 0
//! until a reviewer approves the computed total or overrides it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::compare::{ExecutionStatus, TestResults};
use crate::notebook::SubmissionRef;
use crate::rubric::{Evaluator, RubricModule, RubricSpec};
use crate::time::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultSource {
    Tests,
    Llm,
    Assembly,
}

impl From<Evaluator> for ResultSource {
    fn from(e: Evaluator) -> Self {
        match e {
            Evaluator::Llm => ResultSource::Llm,
            Evaluator::Tests => ResultSource::Tests,
            Evaluator::Assembly => ResultSource::Assembly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleResult {
    pub module_id: String,
    pub source: ResultSource,
    pub awarded_points: f64,
    pub max_points: f64,
    pub detail: String,
    pub status: ModuleStatus,
}

impl ModuleResult {
    pub fn ok(module: &RubricModule, awarded: f64, detail: impl Into<String>) -> Self {
        ModuleResult {
            module_id: module.module_id.clone(),
            source: module.evaluator.into(),
            awarded_points: awarded,
            max_points: module.points,
            detail: detail.into(),
            status: ModuleStatus::Ok,
        }
    }

    pub fn failed(module: &RubricModule, detail: impl Into<String>) -> Self {
        ModuleResult {
            status: ModuleStatus::Failed,
            ..ModuleResult::ok(module, 0.0, detail)
        }
    }

    pub fn skipped(module: &RubricModule, detail: impl Into<String>) -> Self {
        ModuleResult {
            status: ModuleStatus::Skipped,
            ..ModuleResult::ok(module, 0.0, detail)
        }
    }
}

/// Awards `pass_fraction × points`. A run that timed out, crashed or did not
/// parse fails the module with 0 points.
pub fn score_tests_module(module: &RubricModule, results: &TestResults) -> ModuleResult {
    match results.execution_status {
        ExecutionStatus::Completed => {
            let awarded = (results.pass_fraction * module.points).clamp(0.0, module.points);
            ModuleResult::ok(module, awarded, results.summary())
        }
        status => ModuleResult::failed(
            module,
            format!("test run ended with {}: {}", status.as_str(), results.summary()),
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QaStatus {
    Completed,
    Flagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    ApproveComputed,
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub reviewer_id: String,
    pub action: ReviewAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub override_score: Option<f64>,
    #[serde(default)]
    pub note: String,
    pub decided_at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradingRecord {
    pub submission: SubmissionRef,
    pub module_results: Vec<ModuleResult>,
    /// Sum over non-skipped modules, retained even when flagged.
    pub total_awarded: f64,
    pub total_possible: f64,
    pub qa_status: QaStatus,
    pub flag_reasons: Vec<String>,
    pub review: Option<ReviewDecision>,
    #[serde(default)]
    pub review_history: Vec<ReviewDecision>,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
}

impl GradingRecord {
    /// The score students and exports see.
    pub fn exposed_score(&self) -> f64 {
        match &self.review {
            Some(ReviewDecision { action: ReviewAction::Override, override_score: Some(s), .. }) => *s,
            Some(_) => self.total_awarded,
            None if self.qa_status == QaStatus::Flagged => 0.0,
            None => self.total_awarded,
        }
    }

    /// Flagged and not yet reviewed.
    pub fn awaiting_review(&self) -> bool {
        self.qa_status == QaStatus::Flagged && self.review.is_none()
    }

    pub fn result(&self, module_id: &str) -> Option<&ModuleResult> {
        self.module_results.iter().find(|r| r.module_id == module_id)
    }

    /// Adds a submission-level flag (parse failure, missing file, ...).
    pub fn add_flag(&mut self, reason: impl Into<String>) {
        let reason = reason.into();
        if !self.flag_reasons.contains(&reason) {
            self.flag_reasons.push(reason);
        }
        self.qa_status = QaStatus::Flagged;
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("results reference unknown module(s): {0:?}")]
    UnknownModules(Vec<String>),
    #[error("no result for module(s): {0:?}")]
    MissingModules(Vec<String>),
    #[error("more than one result for module \"{0}\"")]
    DuplicateResult(String),
    #[error("result for \"{module_id}\" is inconsistent: {reason}")]
    InvalidResult { module_id: String, reason: String },
}

/// Combines one result per scored module into a record.
pub fn aggregate(
    rubric: &RubricSpec,
    submission: SubmissionRef,
    results: Vec<ModuleResult>,
    at: Timestamp,
) -> Result<GradingRecord, ScoringError> {
    let unknown: Vec<String> = results
        .iter()
        .filter(|r| rubric.module(&r.module_id).is_none())
        .map(|r| r.module_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(ScoringError::UnknownModules(unknown));
    }
    for (i, r) in results.iter().enumerate() {
        if results[..i].iter().any(|p| p.module_id == r.module_id) {
            return Err(ScoringError::DuplicateResult(r.module_id.clone()));
        }
        let m = rubric.module(&r.module_id).expect("checked above");
        let bad = |reason: &str| ScoringError::InvalidResult {
            module_id: r.module_id.clone(),
            reason: reason.into(),
        };
        if r.max_points != m.points {
            return Err(bad("max_points differs from rubric points"));
        }
        if !(r.awarded_points.is_finite() && (0.0..=r.max_points).contains(&r.awarded_points)) {
            return Err(bad("awarded points outside [0, max]"));
        }
        if r.status == ModuleStatus::Skipped && r.awarded_points != 0.0 {
            return Err(bad("skipped module awarded points"));
        }
    }
    let missing: Vec<String> = rubric
        .scored_modules()
        .filter(|m| !results.iter().any(|r| r.module_id == m.module_id))
        .map(|m| m.module_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(ScoringError::MissingModules(missing));
    }

    // Keep rubric order.
    let mut ordered = Vec::with_capacity(results.len());
    let mut results = results;
    for m in &rubric.modules {
        if let Some(pos) = results.iter().position(|r| r.module_id == m.module_id) {
            ordered.push(results.swap_remove(pos));
        }
    }

    let total_awarded: f64 = ordered
        .iter()
        .filter(|r| r.status != ModuleStatus::Skipped)
        .map(|r| r.awarded_points)
        .sum();
    let total_possible: f64 = rubric.scored_modules().map(|m| m.points).sum();
    let flag_reasons: Vec<String> = ordered
        .iter()
        .filter(|r| r.source != ResultSource::Assembly)
        .filter_map(|r| match r.status {
            ModuleStatus::Ok => None,
            ModuleStatus::Failed => Some(format!("{} failed: {}", r.module_id, first_line(&r.detail))),
            ModuleStatus::Skipped => Some(format!("{} skipped: {}", r.module_id, first_line(&r.detail))),
        })
        .collect();
    let qa_status = if flag_reasons.is_empty() {
        QaStatus::Completed
    } else {
        QaStatus::Flagged
    };
    Ok(GradingRecord {
        submission,
        module_results: ordered,
        total_awarded: total_awarded.min(total_possible),
        total_possible,
        qa_status,
        flag_reasons,
        review: None,
        review_history: Vec::new(),
        created_at: at,
        updated_at: at,
    })
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

/// Re-aggregates fresh module results while keeping the previous record's
/// review state, history and creation time.
pub fn regrade(
    previous: &GradingRecord,
    rubric: &RubricSpec,
    results: Vec<ModuleResult>,
    at: Timestamp,
) -> Result<GradingRecord, ScoringError> {
    let mut next = aggregate(rubric, previous.submission.clone(), results, at)?;
    next.created_at = previous.created_at;
    next.review = previous.review.clone();
    next.review_history = previous.review_history.clone();
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ReviewError {
    #[error("override score {score} outside [0, {total_possible}]")]
    InvalidOverride { score: f64, total_possible: f64 },
    #[error("override requires override_score")]
    MissingOverrideScore,
    #[error("record is not flagged; only an override may be applied")]
    NotFlagged,
}

/// Applies a reviewer decision. Re-applying the current decision is a
/// no-op; any other decision replaces it (last write wins) and is appended
/// to the history.
pub fn apply_review(record: &GradingRecord, decision: ReviewDecision) -> Result<GradingRecord, ReviewError> {
    if record.qa_status != QaStatus::Flagged && decision.action != ReviewAction::Override {
        return Err(ReviewError::NotFlagged);
    }
    let mut decision = decision;
    match decision.action {
        ReviewAction::Override => {
            let score = decision.override_score.ok_or(ReviewError::MissingOverrideScore)?;
            if !(score.is_finite() && (0.0..=record.total_possible).contains(&score)) {
                return Err(ReviewError::InvalidOverride {
                    score,
                    total_possible: record.total_possible,
                });
            }
        }
        ReviewAction::ApproveComputed => decision.override_score = None,
    }
    if record.review.as_ref() == Some(&decision) {
        return Ok(record.clone());
    }
    let mut next = record.clone();
    next.updated_at = next.updated_at.max(decision.decided_at);
    next.review_history.push(decision.clone());
    next.review = Some(decision);
    Ok(next)
}

/// Removes the active review; the history keeps it.
pub fn revoke_review(record: &GradingRecord, at: Timestamp) -> GradingRecord {
    let mut next = record.clone();
    next.review = None;
    next.updated_at = next.updated_at.max(at);
    next
}
