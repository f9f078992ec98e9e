//! Role prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. Bound values are inserted as-is and
//! never re-scanned, so student code containing braces is safe to bind.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::feedback::{Evidence, JudgeVerdict};
use crate::rubric::{Evaluator, RubricModule, RubricSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Judge,
    Critic,
    Explainer,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("missing binding for placeholder \"{0}\"")]
    MissingBinding(String),
    #[error("template error at byte {offset}: {reason}")]
    Template { offset: usize, reason: &'static str },
    #[error("declared placeholders {declared:?} do not match template placeholders {found:?}")]
    PlaceholderMismatch { declared: Vec<String>, found: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PromptDoc", into = "PromptDoc")]
pub struct RolePrompt {
    pub role: Role,
    template: String,
    placeholder_names: Vec<String>,
    pieces: Vec<Piece>,
}

#[derive(Serialize, Deserialize)]
struct PromptDoc {
    role: Role,
    template: String,
}

impl TryFrom<PromptDoc> for RolePrompt {
    type Error = PromptError;
    fn try_from(d: PromptDoc) -> Result<Self, PromptError> {
        RolePrompt::new(d.role, d.template)
    }
}

impl From<RolePrompt> for PromptDoc {
    fn from(p: RolePrompt) -> Self {
        PromptDoc { role: p.role, template: p.template }
    }
}

impl RolePrompt {
    /// Parses `template`; placeholder names are collected in first-use order.
    pub fn new(role: Role, template: impl Into<String>) -> Result<Self, PromptError> {
        let template = template.into();
        let pieces = parse_template(&template)?;
        let mut placeholder_names: Vec<String> = Vec::new();
        for p in &pieces {
            if let Piece::Slot(name) = p {
                if !placeholder_names.contains(name) {
                    placeholder_names.push(name.clone());
                }
            }
        }
        Ok(RolePrompt { role, template, placeholder_names, pieces })
    }

    /// Like [`new`](Self::new) but also checks that `declared` names exactly
    /// the template's placeholders.
    pub fn with_placeholders(
        role: Role,
        template: impl Into<String>,
        declared: &[&str],
    ) -> Result<Self, PromptError> {
        let p = Self::new(role, template)?;
        let mut a: Vec<String> = declared.iter().map(|s| s.to_string()).collect();
        let mut b = p.placeholder_names.clone();
        a.sort();
        a.dedup();
        b.sort();
        if a != b {
            return Err(PromptError::PlaceholderMismatch { declared: a, found: b });
        }
        Ok(p)
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn placeholder_names(&self) -> &[String] {
        &self.placeholder_names
    }
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn parse_template(t: &str) -> Result<Vec<Piece>, PromptError> {
    let bytes = t.as_bytes();
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut i = 0;
    let mut run_start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                text.push_str(&t[run_start..i]);
                text.push('{');
                i += 2;
                run_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                text.push_str(&t[run_start..i]);
                text.push('}');
                i += 2;
                run_start = i;
            }
            b'{' => {
                text.push_str(&t[run_start..i]);
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && is_name_byte(bytes[j]) {
                    j += 1;
                }
                if j == start || bytes.get(j) != Some(&b'}') {
                    return Err(PromptError::Template {
                        offset: i,
                        reason: "expected a placeholder name followed by '}'",
                    });
                }
                if !text.is_empty() {
                    pieces.push(Piece::Text(core::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(t[start..j].into()));
                i = j + 1;
                run_start = i;
            }
            b'}' => {
                return Err(PromptError::Template { offset: i, reason: "unmatched '}'" });
            }
            _ => i += 1,
        }
    }
    text.push_str(&t[run_start..]);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

/// Substitutes every placeholder. Extra bindings are ignored.
pub fn render_prompt(
    prompt: &RolePrompt,
    bindings: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    if let Some(missing) = prompt.placeholder_names.iter().find(|n| !bindings.contains_key(*n)) {
        return Err(PromptError::MissingBinding(missing.clone()));
    }
    let mut out = String::with_capacity(prompt.template.len());
    for p in &prompt.pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => out.push_str(&bindings[name]),
        }
    }
    Ok(out)
}

pub const JUDGE_TEMPLATE: &str = "You are grading one atomic rubric item of a student's programming assignment.

Module: {module_id}
Criteria: {criteria}
Maximum points: {max_points}

Evidence:
{evidence}

Judge only the criteria above. Reply with a single JSON object of the form
{{\"score\": <number from 0 to {max_points}>, \"justification\": \"<short explanation>\"}}
";

pub const CRITIC_TEMPLATE: &str = "Critique the structure of the student's code below: decomposition into functions, naming, documentation and docstrings, readability. Do not assign a score.

Code:
{code}
";

pub const EXPLAINER_TEMPLATE: &str = "Rewrite the grading notes below as plain-language advice addressed to the student. Explain what worked, what did not and what to try next. Do not mention scores, JSON, field names or internal identifiers.

Rubric findings:
{findings}

Code critique:
{critique}
";

/// One template per role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub judge: RolePrompt,
    pub critic: RolePrompt,
    pub explainer: RolePrompt,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            judge: RolePrompt::new(Role::Judge, JUDGE_TEMPLATE).expect("judge template"),
            critic: RolePrompt::new(Role::Critic, CRITIC_TEMPLATE).expect("critic template"),
            explainer: RolePrompt::new(Role::Explainer, EXPLAINER_TEMPLATE).expect("explainer template"),
        }
    }
}

/// Formats a points value for prompts and reports: integers without a
/// fractional part, otherwise up to six significant decimals.
pub fn format_points(p: f64) -> String {
    if p == libm::trunc(p) && libm::fabs(p) < 1e15 {
        format!("{}", p as i64)
    } else {
        let s = format!("{p:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Judge bindings: `module_id`, `criteria`, `max_points`, the combined
/// `evidence`, plus one binding per component the module requires.
pub fn judge_bindings(module: &RubricModule, ev: &Evidence) -> BTreeMap<String, String> {
    let mut b = BTreeMap::new();
    b.insert("module_id".into(), module.module_id.clone());
    b.insert("criteria".into(), module.criteria.clone());
    b.insert("max_points".into(), format_points(module.points));
    b.insert("evidence".into(), ev.render());
    for component in &module.required_inputs {
        let value = match component.as_str() {
            "code" => ev.code_excerpts.join("\n\n"),
            "markdown" => ev.markdown_excerpts.join("\n\n"),
            other => ev.derived_artifacts.get(other).cloned().unwrap_or_default(),
        };
        b.insert(component.clone(), value);
    }
    if let Some(t) = &ev.test_results_summary {
        b.insert("test_results".into(), t.clone());
    }
    b
}

pub fn critic_bindings(ev: &Evidence) -> BTreeMap<String, String> {
    let mut b = BTreeMap::new();
    b.insert("code".into(), ev.code_excerpts.join("\n\n"));
    b
}

pub fn explainer_bindings(verdicts: &[JudgeVerdict], critique: &str) -> BTreeMap<String, String> {
    let mut findings = String::new();
    for v in verdicts {
        findings.push_str(&format!(
            "- {} ({} of {}): {}\n",
            v.module_id,
            format_points(v.awarded_points),
            format_points(v.max_points),
            v.justification
        ));
    }
    let mut b = BTreeMap::new();
    b.insert("findings".into(), findings);
    b.insert("critique".into(), critique.into());
    b
}

/// Static compatibility check between a judge prompt and a rubric: for each
/// LLM module, placeholders the module's own bindings cannot satisfy.
pub fn judge_prompt_gaps(prompt: &RolePrompt, rubric: &RubricSpec) -> Vec<(String, Vec<String>)> {
    let mut gaps = Vec::new();
    for m in rubric.modules.iter().filter(|m| m.evaluator == Evaluator::Llm) {
        let ev = Evidence::empty(&m.module_id);
        let bound = judge_bindings(m, &ev);
        let missing: Vec<String> = prompt
            .placeholder_names()
            .iter()
            .filter(|n| !bound.contains_key(*n) && n.as_str() != "test_results")
            .cloned()
            .collect();
        if !missing.is_empty() {
            gaps.push((m.module_id.clone(), missing));
        }
    }
    gaps
}
