//! Inputs and outputs of the judge, critic and explainer roles.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::notebook::CanonicalSubmission;
use crate::rubric::RubricModule;

/// What one rubric module is judged on. Only components the module lists
/// in `required_inputs` are included.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub module_id: String,
    pub code_excerpts: Vec<String>,
    pub markdown_excerpts: Vec<String>,
    pub test_results_summary: Option<String>,
    pub derived_artifacts: BTreeMap<String, String>,
}

impl Evidence {
    pub fn empty(module_id: &str) -> Self {
        Evidence {
            module_id: module_id.into(),
            ..Evidence::default()
        }
    }

    /// Gathers evidence for `module`. `artifacts` holds derived components
    /// by id; `test_summary` is the summary of any test modules this module
    /// depends on.
    pub fn collect(
        module: &RubricModule,
        sub: &CanonicalSubmission,
        artifacts: &BTreeMap<String, String>,
        test_summary: Option<String>,
    ) -> Self {
        let mut ev = Evidence::empty(&module.module_id);
        for component in &module.required_inputs {
            match component.as_str() {
                "code" => ev.code_excerpts = sub.code_cells().map(|c| c.source.clone()).collect(),
                "markdown" => {
                    ev.markdown_excerpts = sub.markdown_cells().map(|c| c.source.clone()).collect()
                }
                other => {
                    if let Some(v) = artifacts.get(other) {
                        ev.derived_artifacts.insert(other.into(), v.clone());
                    }
                }
            }
        }
        ev.test_results_summary = test_summary;
        ev
    }

    /// Whole-submission code evidence for the critic.
    pub fn structure(sub: &CanonicalSubmission) -> Self {
        Evidence {
            module_id: String::from("code_structure"),
            code_excerpts: sub.code_cells().map(|c| c.source.clone()).collect(),
            ..Evidence::default()
        }
    }

    /// Plain-text rendering used as the judge prompt's `{evidence}`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, code) in self.code_excerpts.iter().enumerate() {
            out.push_str(&format!("[code cell {}]\n{}\n\n", i + 1, code.trim_end()));
        }
        for (i, md) in self.markdown_excerpts.iter().enumerate() {
            out.push_str(&format!("[markdown cell {}]\n{}\n\n", i + 1, md.trim_end()));
        }
        for (k, v) in &self.derived_artifacts {
            out.push_str(&format!("[{k}]\n{}\n\n", v.trim_end()));
        }
        if let Some(t) = &self.test_results_summary {
            out.push_str(&format!("[test results]\n{}\n\n", t.trim_end()));
        }
        if out.is_empty() {
            out.push_str("(no evidence supplied)\n");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub module_id: String,
    pub awarded_points: f64,
    pub max_points: f64,
    pub justification: String,
    pub raw_response: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainStatus {
    Ok,
    Flagged,
}

/// A module whose judge call never produced a valid verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleFailure {
    pub module_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutcome {
    pub verdicts: Vec<JudgeVerdict>,
    pub critique: String,
    pub student_advice: String,
    pub status: ChainStatus,
    pub flag_reason: Option<String>,
    pub attempts_used: u32,
    #[serde(default)]
    pub failures: Vec<ModuleFailure>,
}

impl ChainOutcome {
    pub fn empty() -> Self {
        ChainOutcome {
            verdicts: Vec::new(),
            critique: String::new(),
            student_advice: String::new(),
            status: ChainStatus::Ok,
            flag_reason: None,
            attempts_used: 0,
            failures: Vec::new(),
        }
    }

    pub fn verdict(&self, module_id: &str) -> Option<&JudgeVerdict> {
        self.verdicts.iter().find(|v| v.module_id == module_id)
    }

    pub fn failure(&self, module_id: &str) -> Option<&ModuleFailure> {
        self.failures.iter().find(|f| f.module_id == module_id)
    }

    /// Records a flag; the first reason is kept as `flag_reason`, later ones
    /// are appended.
    pub fn flag(&mut self, reason: String) {
        self.status = ChainStatus::Flagged;
        self.flag_reason = Some(match self.flag_reason.take() {
            None => reason,
            Some(prev) => format!("{prev}; {reason}"),
        });
    }
}

/// Identifiers that must never reach student-facing advice.
pub const INTERNAL_FIELD_NAMES: [&str; 5] = [
    "module_id",
    "awarded_points",
    "max_points",
    "raw_response",
    "\"justification\"",
];

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("advice leaks internal field name {0}")]
pub struct HygieneError(pub &'static str);

/// Rejects advice that mentions verdict field names. `justification` is an
/// ordinary word, so it only counts in its quoted JSON-key form.
pub fn check_advice_hygiene(advice: &str) -> Result<(), HygieneError> {
    match INTERNAL_FIELD_NAMES.iter().find(|f| advice.contains(*f)) {
        Some(f) => Err(HygieneError(f)),
        None => Ok(()),
    }
}
