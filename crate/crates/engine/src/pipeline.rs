//! Grading one submission end to end: intake, static checks, sandboxed
//! tests, artifact probes, the feedback chain, aggregation and the report.
//!
//! Every problem with the submission itself ends up as a skipped or failed
//! module (and so a flag). Only host faults are returned as errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use autograde_core::prompt::PromptSet;
use autograde_core::{
    aggregate, check_completeness, render_student_report, score_tests_module, CanonicalSubmission,
    ChainOutcome, Evaluator, Evidence, GradingRecord, ModuleResult, RubricModule, RubricSpec,
    ScoringError, SubmissionRef, TestResults, Timestamp,
};

use crate::backend::Backend;
use crate::chain::{run_chain, ChainInput, RetryPolicy};
use crate::ingest::load_submission;
use crate::sandbox::{Sandbox, SandboxError};

/// Artifact values and their failure notes, keyed by artifact id.
type Probed = BTreeMap<String, String>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error("internal scoring error: {0}")]
    Scoring(#[from] ScoringError),
}

#[derive(Clone, Debug)]
pub struct GradeOutput {
    pub record: GradingRecord,
    pub chain: ChainOutcome,
    pub report: String,
    /// Raw notebook bytes, when the file could be read.
    pub notebook: Option<Vec<u8>>,
}

pub struct Grader<'a> {
    pub rubric: &'a RubricSpec,
    pub sandbox: &'a Sandbox,
    pub backend: &'a dyn Backend,
    pub retry: &'a RetryPolicy,
    pub prompts: &'a PromptSet,
}

impl Grader<'_> {
    pub fn grade(&self, sref: &SubmissionRef, at: Timestamp) -> Result<GradeOutput, PipelineError> {
        let notebook = std::fs::read(&sref.source_path).ok();
        let (sub, attachments) = match load_submission(sref) {
            Ok(v) => v,
            Err(e) => return self.unusable(sref, &e.to_string(), notebook, at),
        };
        let mut submission_flags = Vec::new();
        let completeness = check_completeness(&sub, self.rubric);
        if !completeness.has_code {
            submission_flags.push("submission has no code cells".to_string());
        }

        let syntax_error = if completeness.has_code {
            let check = self.sandbox.check_syntax(&sub.program())?;
            (!check.ok).then(|| describe_syntax_error(&sub, &check.message, check.line))
        } else {
            None
        };

        let (artifacts, artifact_failures) = self.probe(&sub, &attachments, syntax_error.as_deref())?;

        let mut results: BTreeMap<String, ModuleResult> = BTreeMap::new();
        let mut test_runs: BTreeMap<String, TestResults> = BTreeMap::new();
        let mut llm_modules: Vec<&RubricModule> = Vec::new();
        for m in &self.rubric.modules {
            if m.evaluator == Evaluator::Assembly {
                continue;
            }
            if let Some(reason) = unmet_inputs(m, &completeness.missing_components, &artifact_failures) {
                results.insert(m.module_id.clone(), ModuleResult::skipped(m, reason));
                continue;
            }
            match m.evaluator {
                Evaluator::Tests => {
                    let suite = m.test_suite.as_ref().expect("validated rubric has a suite");
                    let run = match &syntax_error {
                        Some(msg) => TestResults::syntax_error(suite, msg.clone()),
                        None => self.sandbox.run_tests(&sub, suite, &attachments)?,
                    };
                    results.insert(m.module_id.clone(), score_tests_module(m, &run));
                    test_runs.insert(m.module_id.clone(), run);
                }
                Evaluator::Llm => llm_modules.push(m),
                Evaluator::Assembly => unreachable!(),
            }
        }

        let mut evidence = BTreeMap::new();
        for m in &llm_modules {
            let summary = dependency_summary(m, &test_runs);
            evidence.insert(m.module_id.clone(), Evidence::collect(m, &sub, &artifacts, summary));
        }
        let input = ChainInput {
            modules: llm_modules.clone(),
            evidence,
            structure: Evidence::structure(&sub),
        };
        let chain = run_chain(&input, self.prompts, self.backend, self.retry);
        for m in &llm_modules {
            let r = match (chain.verdict(&m.module_id), chain.failure(&m.module_id)) {
                (Some(v), _) => ModuleResult::ok(m, v.awarded_points, v.justification.clone()),
                (None, Some(f)) => ModuleResult::failed(m, f.reason.clone()),
                (None, None) => ModuleResult::failed(m, "no verdict"),
            };
            results.insert(m.module_id.clone(), r);
        }
        if let Some(asm) = self.rubric.assembly_module() {
            let n = results.len();
            results.insert(asm.module_id.clone(), ModuleResult::ok(asm, 0.0, format!("assembled from {n} module results")));
        }

        let mut record = aggregate(self.rubric, sref.clone(), results.into_values().collect(), at)?;
        for f in submission_flags {
            record.add_flag(f);
        }
        if let Some(msg) = &syntax_error {
            record.add_flag(format!("syntax error: {}", first_line(msg)));
        }
        if chain.critique.is_empty() || chain.student_advice.is_empty() {
            if let Some(reason) = &chain.flag_reason {
                record.add_flag(format!("feedback chain: {reason}"));
            }
        }
        let report = render_student_report(&record, &chain, self.rubric);
        Ok(GradeOutput { record, chain, report, notebook })
    }

    /// A file that could not be read or parsed: every module is skipped.
    fn unusable(&self, sref: &SubmissionRef, reason: &str, notebook: Option<Vec<u8>>, at: Timestamp) -> Result<GradeOutput, PipelineError> {
        let results = self
            .rubric
            .modules
            .iter()
            .map(|m| ModuleResult::skipped(m, reason))
            .collect();
        let mut record = aggregate(self.rubric, sref.clone(), results, at)?;
        record.add_flag(reason.to_string());
        let chain = ChainOutcome::empty();
        let report = render_student_report(&record, &chain, self.rubric);
        Ok(GradeOutput { record, chain, report, notebook })
    }

    fn probe(
        &self,
        sub: &CanonicalSubmission,
        attachments: &[PathBuf],
        syntax_error: Option<&str>,
    ) -> Result<(Probed, Probed), SandboxError> {
        let probes = &self.rubric.artifacts;
        if probes.is_empty() || sub.code_cells().next().is_none() {
            return Ok(Default::default());
        }
        if let Some(msg) = syntax_error {
            let failures = probes
                .iter()
                .map(|p| (p.component_id.clone(), format!("not evaluated: {}", first_line(msg))))
                .collect();
            return Ok((BTreeMap::new(), failures));
        }
        let report = self.sandbox.probe_artifacts(sub, probes, attachments)?;
        Ok((report.values, report.failures))
    }
}

fn unmet_inputs(m: &RubricModule, missing: &[String], artifact_failures: &BTreeMap<String, String>) -> Option<String> {
    let absent: Vec<&str> = m
        .required_inputs
        .iter()
        .filter(|c| missing.contains(c))
        .map(String::as_str)
        .collect();
    if !absent.is_empty() {
        return Some(format!("missing required input(s): {}", absent.join(", ")));
    }
    m.required_inputs
        .iter()
        .find_map(|c| artifact_failures.get(c).map(|e| format!("artifact {c} unavailable: {}", first_line(e))))
}

fn dependency_summary(m: &RubricModule, runs: &BTreeMap<String, TestResults>) -> Option<String> {
    let parts: Vec<String> = m
        .depends_on
        .iter()
        .filter_map(|d| runs.get(d).map(|r| format!("{d}: {}", r.summary())))
        .collect();
    (!parts.is_empty()).then(|| parts.join("\n"))
}

fn describe_syntax_error(sub: &CanonicalSubmission, message: &str, line: Option<usize>) -> String {
    match line.and_then(|l| sub.locate_line(l)) {
        Some((cell, l)) => format!("{message} (cell {cell}, line {l})"),
        None => message.to_string(),
    }
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}
