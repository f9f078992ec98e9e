//! Core grading logic for the autograding engine.
//!
//! Everything in this crate is a pure transformation over owned data and
//! needs only `alloc`: notebook parsing, rubric validation and execution
//! planning, numeric answer comparison, prompt rendering and score
//! extraction, module scoring with the review protocol, report rendering and
//! the score statistics used to compare graders.
//!
//! Process execution, persistence, language-model transports and the
//! service/CLI surfaces live in the `autograde` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod compare;
pub mod extract;
pub mod feedback;
pub mod notebook;
pub mod prompt;
pub mod pyscan;
pub mod report;
pub mod rubric;
pub mod scoring;
pub mod stats;
pub mod time;

pub use compare::{
    compare_numeric, grade_observation, CompareError, ExecutionStatus, Expectation, ExpectedValue, Numeric, Observation,
    TestCase, TestOutcome, TestResults, TestSuite, Tolerance,
};
pub use extract::{extract_score, ExtractedScore, ScoreParseError};
pub use feedback::{ChainOutcome, ChainStatus, Evidence, JudgeVerdict};
pub use notebook::{
    check_completeness, parse_notebook, CanonicalSubmission, CellKind, CompletenessReport,
    NotebookCell, NotebookError, SubmissionRef,
};
pub use prompt::{render_prompt, PromptError, Role, RolePrompt};
pub use report::{render_cohort_summary, render_student_report, CohortSummary};
pub use rubric::{
    plan_execution, Evaluator, ExecutionPlan, RubricCategory, RubricDocument, RubricError,
    RubricModule, RubricSpec, Violation,
};
pub use scoring::{
    aggregate, apply_review, score_tests_module, GradingRecord, ModuleResult, ModuleStatus,
    QaStatus, ResultSource, ReviewAction, ReviewDecision, ReviewError, ScoringError,
};
pub use time::Timestamp;
