//! The judge, critic and explainer workflow over a [`Backend`].

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use autograde_core::feedback::check_advice_hygiene;
use autograde_core::prompt::{critic_bindings, explainer_bindings, judge_bindings, PromptSet};
use autograde_core::{
    extract_score, render_prompt, ChainOutcome, Evaluator, Evidence, JudgeVerdict, RubricModule,
};
use autograde_core::feedback::ModuleFailure;

use crate::backend::{Backend, DEFAULT_MAX_TOKENS};

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// `None` uses the backend's own pause (none for the mock, 2 s over HTTP).
    pub backoff: Option<Duration>,
    pub max_tokens: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 2,
            backoff: None,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// Why one role call produced nothing usable.
#[derive(Clone, Debug, PartialEq)]
pub enum CallError {
    Usage(String),
    Prompt(String),
    Backend(String),
    Parse(String),
    Hygiene(String),
    Empty,
}

impl fmt::Display for CallError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallError::Usage(m) => write!(f, "usage error: {m}"),
            CallError::Prompt(m) => write!(f, "prompt error: {m}"),
            CallError::Backend(m) => f.write_str(m),
            CallError::Parse(m) => write!(f, "unparseable response: {m}"),
            CallError::Hygiene(m) => f.write_str(m),
            CallError::Empty => f.write_str("empty response"),
        }
    }
}

struct Caller<'a> {
    backend: &'a dyn Backend,
    policy: &'a RetryPolicy,
    attempts: u32,
}

impl Caller<'_> {
    /// Calls until `accept` takes the response or attempts run out. Only
    /// backend and acceptance failures are retried.
    fn call<T>(&mut self, prompt: &str, mut accept: impl FnMut(String) -> Result<T, CallError>) -> Result<T, CallError> {
        let attempts = self.policy.max_attempts.max(1);
        let pause = self.policy.backoff.unwrap_or_else(|| self.backend.retry_backoff());
        let mut last = CallError::Empty;
        for n in 1..=attempts {
            if n > 1 && !pause.is_zero() {
                std::thread::sleep(pause);
            }
            self.attempts += 1;
            match self.backend.complete(prompt, self.policy.max_tokens) {
                Ok(raw) => match accept(raw) {
                    Ok(v) => return Ok(v),
                    Err(e) => last = e,
                },
                Err(e) => last = CallError::Backend(e.to_string()),
            }
        }
        Err(last)
    }
}

pub fn judge_module(
    module: &RubricModule,
    ev: &Evidence,
    prompts: &PromptSet,
    backend: &dyn Backend,
    policy: &RetryPolicy,
) -> (Result<JudgeVerdict, CallError>, u32) {
    let mut caller = Caller { backend, policy, attempts: 0 };
    let result = judge_with(&mut caller, module, ev, prompts);
    (result, caller.attempts)
}

fn judge_with(caller: &mut Caller<'_>, module: &RubricModule, ev: &Evidence, prompts: &PromptSet) -> Result<JudgeVerdict, CallError> {
    if module.evaluator != Evaluator::Llm {
        return Err(CallError::Usage(format!("{} is not an llm module", module.module_id)));
    }
    let prompt = render_prompt(&prompts.judge, &judge_bindings(module, ev)).map_err(|e| CallError::Prompt(e.to_string()))?;
    caller.call(&prompt, |raw| match extract_score(&raw, module.points) {
        Ok(s) => Ok(JudgeVerdict {
            module_id: module.module_id.clone(),
            awarded_points: s.score,
            max_points: module.points,
            justification: s.justification,
            raw_response: raw,
        }),
        Err(e) => Err(CallError::Parse(format!("{} ({})", e, e.kind()))),
    })
}

fn critique_with(caller: &mut Caller<'_>, structure: &Evidence, prompts: &PromptSet) -> Result<String, CallError> {
    if structure.code_excerpts.iter().all(|c| c.trim().is_empty()) {
        return Err(CallError::Usage("no code to critique".into()));
    }
    let prompt = render_prompt(&prompts.critic, &critic_bindings(structure)).map_err(|e| CallError::Prompt(e.to_string()))?;
    caller.call(&prompt, |raw| if raw.trim().is_empty() { Err(CallError::Empty) } else { Ok(raw) })
}

fn explain_with(caller: &mut Caller<'_>, verdicts: &[JudgeVerdict], critique: &str, prompts: &PromptSet) -> Result<String, CallError> {
    if verdicts.is_empty() {
        return Err(CallError::Usage("no verdicts to explain".into()));
    }
    let prompt = render_prompt(&prompts.explainer, &explainer_bindings(verdicts, critique))
        .map_err(|e| CallError::Prompt(e.to_string()))?;
    caller.call(&prompt, |raw| {
        if raw.trim().is_empty() {
            return Err(CallError::Empty);
        }
        check_advice_hygiene(&raw).map_err(|e| CallError::Hygiene(e.to_string()))?;
        Ok(raw)
    })
}

/// What one submission's chain needs.
pub struct ChainInput<'a> {
    pub modules: Vec<&'a RubricModule>,
    pub evidence: BTreeMap<String, Evidence>,
    /// Whole-submission code for the critic.
    pub structure: Evidence,
}

/// Judges every module in order, then critiques and explains once.
/// Never fails: problems become flags on the outcome.
pub fn run_chain(input: &ChainInput<'_>, prompts: &PromptSet, backend: &dyn Backend, policy: &RetryPolicy) -> ChainOutcome {
    let mut out = ChainOutcome::empty();
    if input.modules.is_empty() {
        return out;
    }
    let mut caller = Caller { backend, policy, attempts: 0 };
    for m in &input.modules {
        let ev = input.evidence.get(&m.module_id).cloned().unwrap_or_else(|| Evidence::empty(&m.module_id));
        match judge_with(&mut caller, m, &ev, prompts) {
            Ok(v) => out.verdicts.push(v),
            Err(e) => {
                out.flag(format!("module {}: {e}", m.module_id));
                out.failures.push(ModuleFailure {
                    module_id: m.module_id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    match critique_with(&mut caller, &input.structure, prompts) {
        Ok(c) => out.critique = c,
        Err(e) => out.flag(format!("critic: {e}")),
    }
    match explain_with(&mut caller, &out.verdicts, &out.critique, prompts) {
        Ok(a) => out.student_advice = a,
        Err(e) => out.flag(format!("explainer: {e}")),
    }
    out.attempts_used = caller.attempts;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockReply};

    fn module(id: &str, points: f64) -> RubricModule {
        RubricModule {
            module_id: id.into(),
            category_id: "c".into(),
            points,
            criteria: format!("criteria of {id}"),
            required_inputs: vec!["code".into()],
            evaluator: Evaluator::Llm,
            test_suite: None,
            depends_on: vec![],
        }
    }

    fn structure() -> Evidence {
        Evidence {
            code_excerpts: vec!["def f():\n    \"\"\"Doc.\"\"\"\n".into()],
            ..Evidence::empty("code_structure")
        }
    }

    fn mock(extra: &[(&str, &str)]) -> MockBackend {
        let mut table: Vec<(String, MockReply)> =
            extra.iter().map(|(k, v)| (k.to_string(), MockReply::Text(v.to_string()))).collect();
        table.push(("Critique the structure".into(), MockReply::Text("All functions have docstrings.".into())));
        table.push(("Rewrite the grading notes".into(), MockReply::Text("Keep going.".into())));
        table.push(("Module: ".into(), MockReply::Text(r#"{"score": 1, "justification": "ok"}"#.into())));
        MockBackend::new(table)
    }

    #[test]
    fn garbage_is_retried_then_flagged() {
        let ms = [module("a", 5.0), module("b", 5.0)];
        let input = ChainInput {
            modules: ms.iter().collect(),
            evidence: BTreeMap::new(),
            structure: structure(),
        };
        let b = mock(&[("Module: b", "no idea")]);
        let out = run_chain(&input, &PromptSet::default(), &b, &RetryPolicy::default());
        assert_eq!(out.status, autograde_core::ChainStatus::Flagged);
        assert!(out.flag_reason.as_deref().unwrap().contains("module b"));
        assert_eq!(out.verdicts.len(), 1);
        // a: 1, b: 2 attempts, critic 1, explainer 1.
        assert_eq!(out.attempts_used, 5);
        assert_eq!(b.calls(), 5);
    }

    #[test]
    fn hygiene_failure_flags() {
        let ms = [module("a", 5.0)];
        let input = ChainInput {
            modules: ms.iter().collect(),
            evidence: BTreeMap::new(),
            structure: structure(),
        };
        let b = MockBackend::new(vec![
            ("Rewrite the grading notes".into(), MockReply::Text("your awarded_points were 3".into())),
            ("Critique the structure".into(), MockReply::Text("fine".into())),
            ("Module: ".into(), MockReply::Text(r#"{"score": 1, "justification": "ok"}"#.into())),
        ]);
        let out = run_chain(&input, &PromptSet::default(), &b, &RetryPolicy::default());
        assert!(out.flag_reason.unwrap().starts_with("explainer: advice leaks"));
        assert!(out.student_advice.is_empty());
    }

    #[test]
    fn empty_module_list_makes_no_calls() {
        let input = ChainInput { modules: vec![], evidence: BTreeMap::new(), structure: structure() };
        let b = mock(&[]);
        let out = run_chain(&input, &PromptSet::default(), &b, &RetryPolicy::default());
        assert_eq!(out, ChainOutcome::empty());
        assert_eq!(b.calls(), 0);
    }
}
