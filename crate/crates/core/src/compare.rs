//! Test suites, expected values and tolerance comparison for
//! continuous-valued answers.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

/// A number or an arbitrarily nested array of numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Numeric {
    Scalar(f64),
    Array(Vec<Numeric>),
}

impl Numeric {
    /// Shape as rendered in mismatch messages: `scalar`, `[3]`, `[2, 2]`,
    /// or `ragged [..]` when sub-arrays disagree.
    pub fn shape(&self) -> String {
        match self.dims() {
            Some(d) if d.is_empty() => "scalar".into(),
            Some(d) => format!("{d:?}"),
            None => match self {
                Numeric::Array(items) => format!("ragged [{}]", items.len()),
                Numeric::Scalar(_) => "scalar".into(),
            },
        }
    }

    fn dims(&self) -> Option<Vec<usize>> {
        match self {
            Numeric::Scalar(_) => Some(Vec::new()),
            Numeric::Array(items) => {
                let mut inner: Option<Vec<usize>> = None;
                for item in items {
                    let d = item.dims()?;
                    match &inner {
                        None => inner = Some(d),
                        Some(prev) if *prev == d => {}
                        Some(_) => return None,
                    }
                }
                let mut dims = alloc::vec![items.len()];
                dims.extend(inner.unwrap_or_default());
                Some(dims)
            }
        }
    }
}

impl core::fmt::Display for Numeric {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Numeric::Scalar(x) => write!(f, "{x}"),
            Numeric::Array(items) => {
                f.write_char('[')?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_char(']')
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const DEFAULT_ABS: f64 = 1e-6;
    pub const DEFAULT_REL: f64 = 1e-9;

    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }

    /// `|observed - expected| <= abs + rel * |expected|`, inclusive.
    pub fn accepts(&self, observed: f64, expected: f64) -> bool {
        if observed == expected {
            return true;
        }
        libm::fabs(observed - expected) <= self.abs + self.rel * libm::fabs(expected)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(Self::DEFAULT_ABS, Self::DEFAULT_REL)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expectation {
    Scalar(f64),
    Array(Vec<Numeric>),
    /// Exact string equality with the rendered result.
    Text(String),
    /// A Python boolean expression over `result`, evaluated in the sandbox.
    Predicate(String),
}

impl Expectation {
    pub fn kind(&self) -> &'static str {
        match self {
            Expectation::Scalar(_) => "scalar",
            Expectation::Array(_) => "array",
            Expectation::Text(_) => "text",
            Expectation::Predicate(_) => "predicate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpectedDoc", into = "ExpectedDoc")]
pub struct ExpectedValue {
    pub expectation: Expectation,
    pub tolerance: Tolerance,
}

impl ExpectedValue {
    pub fn scalar(value: f64, tolerance: Tolerance) -> Self {
        ExpectedValue {
            expectation: Expectation::Scalar(value),
            tolerance,
        }
    }

    pub fn array(values: Vec<Numeric>, tolerance: Tolerance) -> Self {
        ExpectedValue {
            expectation: Expectation::Array(values),
            tolerance,
        }
    }

    pub fn text(value: impl Into<String>) -> Self {
        ExpectedValue {
            expectation: Expectation::Text(value.into()),
            tolerance: Tolerance::default(),
        }
    }

    pub fn predicate(expr: impl Into<String>) -> Self {
        ExpectedValue {
            expectation: Expectation::Predicate(expr.into()),
            tolerance: Tolerance::default(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ExpectedDoc {
    Scalar {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        abs_tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rel_tol: Option<f64>,
    },
    Array {
        value: Vec<Numeric>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        abs_tol: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rel_tol: Option<f64>,
    },
    Text {
        value: String,
    },
    Predicate {
        value: String,
    },
}

impl TryFrom<ExpectedDoc> for ExpectedValue {
    type Error = String;

    fn try_from(doc: ExpectedDoc) -> Result<Self, String> {
        let tol = |abs: Option<f64>, rel: Option<f64>| -> Result<Tolerance, String> {
            let t = Tolerance::new(
                abs.unwrap_or(Tolerance::DEFAULT_ABS),
                rel.unwrap_or(Tolerance::DEFAULT_REL),
            );
            if !(t.abs.is_finite() && t.rel.is_finite() && t.abs >= 0.0 && t.rel >= 0.0) {
                return Err("tolerances must be finite and non-negative".into());
            }
            Ok(t)
        };
        Ok(match doc {
            ExpectedDoc::Scalar { value, abs_tol, rel_tol } => {
                ExpectedValue::scalar(value, tol(abs_tol, rel_tol)?)
            }
            ExpectedDoc::Array { value, abs_tol, rel_tol } => {
                ExpectedValue::array(value, tol(abs_tol, rel_tol)?)
            }
            ExpectedDoc::Text { value } => ExpectedValue::text(value),
            ExpectedDoc::Predicate { value } => ExpectedValue::predicate(value),
        })
    }
}

impl From<ExpectedValue> for ExpectedDoc {
    fn from(v: ExpectedValue) -> Self {
        let (abs_tol, rel_tol) = (Some(v.tolerance.abs), Some(v.tolerance.rel));
        match v.expectation {
            Expectation::Scalar(value) => ExpectedDoc::Scalar { value, abs_tol, rel_tol },
            Expectation::Array(value) => ExpectedDoc::Array { value, abs_tol, rel_tol },
            Expectation::Text(value) => ExpectedDoc::Text { value },
            Expectation::Predicate(value) => ExpectedDoc::Predicate { value },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("shape mismatch: expected {expected}, observed {observed}")]
    ShapeMismatch { expected: String, observed: String },
    #[error("a {0} expectation is not numeric")]
    NotNumeric(&'static str),
}

/// Elementwise tolerance comparison. Arrays must agree in shape.
pub fn compare_numeric(observed: &Numeric, expected: &ExpectedValue) -> Result<bool, CompareError> {
    let tol = expected.tolerance;
    match &expected.expectation {
        Expectation::Scalar(e) => match observed {
            Numeric::Scalar(o) => Ok(tol.accepts(*o, *e)),
            other => Err(CompareError::ShapeMismatch {
                expected: "scalar".into(),
                observed: other.shape(),
            }),
        },
        Expectation::Array(e) => {
            let e = Numeric::Array(e.clone());
            let mut ok = true;
            if !zip_within(observed, &e, &tol, &mut ok) {
                return Err(CompareError::ShapeMismatch {
                    expected: e.shape(),
                    observed: observed.shape(),
                });
            }
            Ok(ok)
        }
        other => Err(CompareError::NotNumeric(other.kind())),
    }
}

// Returns false on structural mismatch; `ok` accumulates the tolerance verdict.
fn zip_within(observed: &Numeric, expected: &Numeric, tol: &Tolerance, ok: &mut bool) -> bool {
    match (observed, expected) {
        (Numeric::Scalar(o), Numeric::Scalar(e)) => {
            *ok &= tol.accepts(*o, *e);
            true
        }
        (Numeric::Array(o), Numeric::Array(e)) if o.len() == e.len() => {
            o.iter().zip(e).all(|(a, b)| zip_within(a, b, tol, ok))
        }
        _ => false,
    }
}

/// One test: evaluate `call_expression` after the student's code and compare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    #[serde(rename = "id")]
    pub test_id: String,
    #[serde(rename = "call")]
    pub call_expression: String,
    pub expected: ExpectedValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// A function the suite expects to be defined at top level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub arity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup_code: Option<String>,
    /// Falls back to the sandbox default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_limit_mb: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub required_functions: Vec<FunctionSpec>,
}

impl TestSuite {
    pub fn new(tests: Vec<TestCase>) -> Self {
        TestSuite {
            tests,
            setup_code: None,
            timeout_seconds: None,
            memory_limit_mb: None,
            required_functions: Vec::new(),
        }
    }

    /// Per-test weights: as declared, or `1/n` each when none are declared.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.tests.len();
        if self.tests.iter().all(|t| t.weight.is_none()) {
            return alloc::vec![1.0 / n as f64; n];
        }
        self.tests.iter().map(|t| t.weight.unwrap_or(0.0)).collect()
    }

    /// Problems with the suite itself, independent of any submission.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.tests.is_empty() {
            out.push("suite has no tests".to_string());
        }
        if let Some(t) = self.timeout_seconds {
            if !(t.is_finite() && t > 0.0) {
                out.push(format!("timeout_seconds must be positive, got {t}"));
            }
        }
        if self.memory_limit_mb == Some(0) {
            out.push("memory_limit_mb must be positive".to_string());
        }
        let declared = self.tests.iter().filter(|t| t.weight.is_some()).count();
        if declared != 0 && declared != self.tests.len() {
            out.push("weights must be declared for every test or for none".to_string());
        } else if declared != 0 {
            let ws = self.weights();
            if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                out.push("weights must be finite and non-negative".to_string());
            } else {
                let sum: f64 = ws.iter().sum();
                if libm::fabs(sum - 1.0) > 1e-9 {
                    out.push(format!("weights sum to {sum}, expected 1"));
                }
            }
        }
        let mut seen: Vec<&str> = Vec::new();
        for t in &self.tests {
            if seen.contains(&t.test_id.as_str()) {
                out.push(format!("duplicate test id \"{}\"", t.test_id));
            }
            seen.push(&t.test_id);
            if t.call_expression.trim().is_empty() {
                out.push(format!("test \"{}\" has an empty call", t.test_id));
            }
        }
        out
    }
}

/// Worst-first ordering: `SyntaxError > Crashed > Timeout > Completed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionStatus {
    Completed,
    Timeout,
    Crashed,
    SyntaxError,
}

impl ExecutionStatus {
    pub fn worst(self, other: ExecutionStatus) -> ExecutionStatus {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionStatus::Completed => "completed",
            ExecutionStatus::Timeout => "timeout",
            ExecutionStatus::Crashed => "crashed",
            ExecutionStatus::SyntaxError => "syntax_error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test_id: String,
    pub passed: bool,
    pub observed: String,
    pub stderr_excerpt: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResults {
    pub per_test: Vec<TestOutcome>,
    /// Sum of passed weights when completed, otherwise 0.
    pub pass_fraction: f64,
    pub execution_status: ExecutionStatus,
    /// Runner notes: syntax error text, crash reason, signature checks.
    pub detail: String,
}

impl TestResults {
    /// Builds results for a suite. Tests with no outcome count as failed.
    pub fn from_outcomes(
        suite: &TestSuite,
        outcomes: Vec<TestOutcome>,
        status: ExecutionStatus,
        detail: String,
    ) -> Self {
        let mut per_test = Vec::with_capacity(suite.tests.len());
        for case in &suite.tests {
            let outcome = outcomes
                .iter()
                .find(|o| o.test_id == case.test_id)
                .cloned()
                .unwrap_or_else(|| TestOutcome {
                    test_id: case.test_id.clone(),
                    passed: false,
                    observed: String::from("<not run>"),
                    stderr_excerpt: String::new(),
                });
            per_test.push(outcome);
        }
        let pass_fraction = if status == ExecutionStatus::Completed {
            weighted_pass_fraction(suite, &per_test)
        } else {
            0.0
        };
        TestResults {
            per_test,
            pass_fraction,
            execution_status: status,
            detail,
        }
    }

    pub fn syntax_error(suite: &TestSuite, message: impl Into<String>) -> Self {
        TestResults::from_outcomes(suite, Vec::new(), ExecutionStatus::SyntaxError, message.into())
    }

    pub fn outcome(&self, test_id: &str) -> Option<&TestOutcome> {
        self.per_test.iter().find(|o| o.test_id == test_id)
    }

    pub fn passed_count(&self) -> usize {
        self.per_test.iter().filter(|o| o.passed).count()
    }

    /// A short plain-text summary used as grading evidence.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} of {} tests passed (execution {})",
            self.passed_count(),
            self.per_test.len(),
            self.execution_status.as_str()
        );
        for o in &self.per_test {
            let verdict = if o.passed { "passed" } else { "failed" };
            let _ = write!(s, "\n- {}: {verdict}, observed {}", o.test_id, o.observed);
        }
        if !self.detail.is_empty() {
            let _ = write!(s, "\n{}", self.detail);
        }
        s
    }
}

fn weighted_pass_fraction(suite: &TestSuite, per_test: &[TestOutcome]) -> f64 {
    let n = per_test.len();
    if n == 0 {
        return 0.0;
    }
    if suite.tests.iter().all(|t| t.weight.is_none()) {
        // Exact ratio for equal weights.
        return per_test.iter().filter(|o| o.passed).count() as f64 / n as f64;
    }
    let sum: f64 = suite
        .weights()
        .iter()
        .zip(per_test)
        .filter(|(_, o)| o.passed)
        .map(|(w, _)| *w)
        .sum();
    sum.clamp(0.0, 1.0)
}

/// What the sandbox saw when it evaluated one test's call expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    /// The call returned. `numeric` is present when the value converts to a
    /// number or nested array; `text` is its `str()` rendering.
    Value { numeric: Option<Numeric>, text: String },
    /// The predicate expression evaluated to this truth value.
    Predicate { holds: bool, text: String },
    /// The call raised.
    Raised(String),
}

/// Decides one test from its observation. Returns the verdict and the
/// rendering stored as `observed`.
pub fn grade_observation(obs: &Observation, expected: &ExpectedValue) -> (bool, String) {
    match (obs, &expected.expectation) {
        (Observation::Raised(err), _) => (false, format!("raised {err}")),
        (Observation::Value { text, .. }, Expectation::Text(want)) => (text == want, text.clone()),
        (Observation::Predicate { holds, text }, Expectation::Predicate(_)) => (*holds, text.clone()),
        (Observation::Value { numeric: Some(n), .. }, Expectation::Scalar(_) | Expectation::Array(_)) => {
            match compare_numeric(n, expected) {
                Ok(ok) => (ok, n.to_string()),
                Err(e) => (false, format!("{n} ({e})")),
            }
        }
        (Observation::Value { numeric: None, text }, Expectation::Scalar(_) | Expectation::Array(_)) => {
            (false, format!("{text} (not numeric)"))
        }
        (Observation::Value { text, .. }, Expectation::Predicate(_))
        | (Observation::Predicate { text, .. }, _) => (false, format!("{text} (kind mismatch)")),
    }
}

impl From<f64> for Numeric {
    fn from(x: f64) -> Self {
        Numeric::Scalar(x)
    }
}
