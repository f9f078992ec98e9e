//! Student feedback documents and cohort summaries.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::feedback::ChainOutcome;
use crate::rubric::RubricSpec;
use crate::scoring::{GradingRecord, ModuleStatus, QaStatus};
use crate::stats::{describe_values, DescriptiveStats};

/// Rounds half-up to two decimals for display.
pub fn round2(x: f64) -> f64 {
    libm::floor(x * 100.0 + 0.5) / 100.0
}

pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

pub const UNDER_REVIEW_BANNER: &str =
    "Status: under review. Your submission is being checked by a member of the teaching team; \
     your mark and detailed feedback will be released once that check is complete.";

/// Markdown feedback for one submission. Flagged records awaiting review get
/// the under-review variant: criteria only, no totals or module scores.
pub fn render_student_report(record: &GradingRecord, chain: &ChainOutcome, rubric: &RubricSpec) -> String {
    let held = record.awaiting_review();
    let mut out = String::new();
    let sub = &record.submission;
    let _ = writeln!(out, "# Feedback report: {}", sub.submission_id);
    out.push('\n');
    let _ = writeln!(out, "- Student: {}", sub.student_id);
    if rubric.title.is_empty() {
        let _ = writeln!(out, "- Assignment: {}", rubric.assignment_id);
    } else {
        let _ = writeln!(out, "- Assignment: {} ({})", rubric.title, rubric.assignment_id);
    }
    let _ = writeln!(out, "- Generated: {}", record.updated_at);
    out.push('\n');
    if held {
        let _ = writeln!(out, "{UNDER_REVIEW_BANNER}");
    } else {
        let _ = writeln!(
            out,
            "**Score: {} / {}**",
            fmt2(record.exposed_score()),
            fmt2(record.total_possible)
        );
        if record.review.is_some() {
            out.push_str("\nThis mark has been confirmed by a member of the teaching team.\n");
        }
    }

    for module in &rubric.modules {
        let Some(result) = record.result(&module.module_id) else {
            continue;
        };
        if result.status == ModuleStatus::Skipped {
            continue;
        }
        out.push('\n');
        let _ = writeln!(out, "## {}", module.module_id);
        out.push('\n');
        let category = rubric
            .category(&module.category_id)
            .map(|c| if c.label.is_empty() { c.category_id.as_str() } else { c.label.as_str() })
            .unwrap_or(module.category_id.as_str());
        let _ = writeln!(out, "Category: {category}");
        if !module.criteria.trim().is_empty() {
            let _ = writeln!(out, "\nCriteria: {}", module.criteria.trim());
        }
        if !held && module.is_scored() {
            let _ = writeln!(
                out,
                "\nAwarded: {} / {}",
                fmt2(result.awarded_points),
                fmt2(result.max_points)
            );
            if !result.detail.trim().is_empty() {
                let _ = writeln!(out, "\n{}", result.detail.trim_end());
            }
        }
    }

    if !chain.critique.trim().is_empty() {
        out.push_str("\n## Overall critique\n\n");
        out.push_str(chain.critique.trim_end());
        out.push('\n');
    }
    if !held && !chain.student_advice.trim().is_empty() {
        out.push_str("\n## Advice\n\n");
        out.push_str(chain.student_advice.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub category_id: String,
    pub mean_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub assignment_id: String,
    /// Records whose score is released: completed, or flagged and reviewed.
    pub n_completed: usize,
    /// Flagged records still awaiting review.
    pub n_flagged: usize,
    /// Over exposed scores of released records; `None` when there are none.
    pub stats: Option<DescriptiveStats>,
    pub category_means: Vec<CategoryMean>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("no records to summarise")]
    EmptyBatch,
}

pub fn render_cohort_summary(records: &[GradingRecord], rubric: &RubricSpec) -> Result<CohortSummary, ReportError> {
    if records.is_empty() {
        return Err(ReportError::EmptyBatch);
    }
    let released: Vec<&GradingRecord> = records.iter().filter(|r| !r.awaiting_review()).collect();
    let scores: Vec<f64> = released.iter().map(|r| r.exposed_score()).collect();
    let category_means = if released.is_empty() {
        Vec::new()
    } else {
        rubric
            .categories
            .iter()
            .filter(|c| c.points > 0.0)
            .map(|c| {
                let sum: f64 = released
                    .iter()
                    .map(|r| {
                        let awarded: f64 = r
                            .module_results
                            .iter()
                            .filter(|m| rubric.module(&m.module_id).is_some_and(|rm| rm.category_id == c.category_id))
                            .filter(|m| m.status != ModuleStatus::Skipped)
                            .map(|m| m.awarded_points)
                            .sum();
                        awarded / c.points
                    })
                    .sum();
                CategoryMean {
                    category_id: c.category_id.clone(),
                    mean_fraction: sum / released.len() as f64,
                }
            })
            .collect()
    };
    Ok(CohortSummary {
        assignment_id: rubric.assignment_id.clone(),
        n_completed: released.len(),
        n_flagged: records.len() - released.len(),
        stats: describe_values(&scores).ok(),
        category_means,
    })
}

impl CohortSummary {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Cohort summary: {}", self.assignment_id);
        out.push('\n');
        let _ = writeln!(out, "- Completed: {}", self.n_completed);
        let _ = writeln!(out, "- Flagged for review: {}", self.n_flagged);
        out.push('\n');
        match &self.stats {
            None => out.push_str("Score statistics unavailable: no completed submissions.\n"),
            Some(s) => {
                out.push_str("| Statistic | Value |\n|---|---|\n");
                let _ = writeln!(out, "| n | {} |", s.n);
                let _ = writeln!(out, "| Mean | {} |", fmt2(s.mean));
                let _ = writeln!(out, "| Median | {} |", fmt2(s.median));
                let _ = writeln!(out, "| Std deviation | {} |", fmt2(s.std));
                let skew = if s.skewness_degenerate { String::from("n/a") } else { format!("{:.3}", s.skewness) };
                let _ = writeln!(out, "| Skewness | {skew} |");
                let _ = writeln!(out, "| Min | {} |", fmt2(s.min));
                let _ = writeln!(out, "| Max | {} |", fmt2(s.max));
            }
        }
        if !self.category_means.is_empty() {
            out.push_str("\n| Category | Mean fraction awarded |\n|---|---|\n");
            for c in &self.category_means {
                let _ = writeln!(out, "| {} | {:.3} |", c.category_id, c.mean_fraction);
            }
        }
        out
    }
}

/// Status string used in grade exports.
pub fn export_status(record: &GradingRecord) -> &'static str {
    match (record.qa_status, &record.review) {
        (_, Some(_)) => "reviewed",
        (QaStatus::Completed, None) => "completed",
        (QaStatus::Flagged, None) => "flagged",
    }
}
