//! Atomized rubrics: point-weighted modules grouped into categories, with
//! evaluator kinds and a dependency graph.
//!
//! A [`RubricDocument`] is the deserialized instructor file. Converting it
//! into a [`RubricSpec`] checks every invariant and reports all violations at
//! once, so a rubric author can fix a file in one pass.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::compare::TestSuite;

/// `depends_on: [ALL]` expands to every non-assembly module.
pub const ALL_MODULES: &str = "ALL";

const POINT_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    Llm,
    Tests,
    Assembly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RubricModule {
    pub module_id: String,
    pub category_id: String,
    pub points: f64,
    pub criteria: String,
    pub required_inputs: Vec<String>,
    pub evaluator: Evaluator,
    pub test_suite: Option<TestSuite>,
    pub depends_on: Vec<String>,
}

impl RubricModule {
    pub fn requires(&self, component: &str) -> bool {
        self.required_inputs.iter().any(|c| c == component)
    }

    pub fn is_scored(&self) -> bool {
        self.evaluator != Evaluator::Assembly
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RubricCategory {
    pub category_id: String,
    pub label: String,
    pub points: f64,
}

/// A Python expression evaluated after the student's code whose rendering
/// becomes a derived component (for example fitted parameters).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactProbe {
    pub component_id: String,
    pub expression: String,
}

/// A validated rubric. Only obtainable through [`RubricSpec::from_document`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RubricSpec {
    pub assignment_id: String,
    pub title: String,
    pub total_points: f64,
    pub categories: Vec<RubricCategory>,
    pub modules: Vec<RubricModule>,
    pub artifacts: Vec<ArtifactProbe>,
}

// ---------------------------------------------------------------------------
// Instructor document

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricDocument {
    pub assignment_id: String,
    #[serde(default)]
    pub title: String,
    pub total_points: f64,
    pub categories: Vec<CategoryDoc>,
    pub modules: Vec<ModuleDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<ArtifactDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryDoc {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub points: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleDoc {
    pub id: String,
    pub category: String,
    pub points: f64,
    #[serde(default)]
    pub criteria: String,
    #[serde(default)]
    pub required_inputs: Vec<String>,
    pub evaluator: Evaluator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<TestSuite>,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactDoc {
    pub id: String,
    pub expression: String,
}

// ---------------------------------------------------------------------------
// Violations

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    NonPositiveTotal { total: f64 },
    InvalidPoints { item: String, points: f64 },
    DuplicateCategory { category_id: String },
    DuplicateModule { module_id: String },
    UnknownCategory { module_id: String, category_id: String },
    CategoryPointMismatch { category_id: String, declared: f64, module_sum: f64 },
    TotalPointMismatch { declared: f64, category_sum: f64 },
    UnknownDependency { module_id: String, dependency: String },
    DependencyCycle { modules: Vec<String> },
    MissingTestSuite { module_id: String },
    InvalidTestSuite { module_id: String, reason: String },
    AssemblyHasPoints { module_id: String, points: f64 },
    MultipleAssembly { modules: Vec<String> },
    AssemblyIncomplete { module_id: String, missing: Vec<String> },
    DuplicateArtifact { component_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NonPositiveTotal { total } => write!(f, "total_points must be positive, got {total}"),
            InvalidPoints { item, points } => {
                write!(f, "{item}: points must be finite and non-negative, got {points}")
            }
            DuplicateCategory { category_id } => write!(f, "duplicate category id \"{category_id}\""),
            DuplicateModule { module_id } => write!(f, "duplicate module id \"{module_id}\""),
            UnknownCategory { module_id, category_id } => {
                write!(f, "module \"{module_id}\" references unknown category \"{category_id}\"")
            }
            CategoryPointMismatch { category_id, declared, module_sum } => write!(
                f,
                "category \"{category_id}\" declares {declared} points but its modules sum to {module_sum}"
            ),
            TotalPointMismatch { declared, category_sum } => write!(
                f,
                "total_points is {declared} but categories sum to {category_sum}"
            ),
            UnknownDependency { module_id, dependency } => {
                write!(f, "module \"{module_id}\" depends on unknown module \"{dependency}\"")
            }
            DependencyCycle { modules } => write!(f, "dependency cycle among {}", modules.join(", ")),
            MissingTestSuite { module_id } => {
                write!(f, "module \"{module_id}\" uses the tests evaluator but has no tests")
            }
            InvalidTestSuite { module_id, reason } => {
                write!(f, "module \"{module_id}\" has an invalid test suite: {reason}")
            }
            AssemblyHasPoints { module_id, points } => {
                write!(f, "assembly module \"{module_id}\" must carry 0 points, has {points}")
            }
            MultipleAssembly { modules } => {
                write!(f, "at most one assembly module is allowed, found {}", modules.join(", "))
            }
            AssemblyIncomplete { module_id, missing } => write!(
                f,
                "assembly module \"{module_id}\" does not depend on {}",
                missing.join(", ")
            ),
            DuplicateArtifact { component_id } => {
                write!(f, "duplicate artifact id \"{component_id}\"")
            }
        }
    }
}

/// Every invariant violation found in a rubric document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RubricError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for RubricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid rubric ({} violation", self.violations.len())?;
        if self.violations.len() != 1 {
            f.write_str("s")?;
        }
        f.write_str(")")?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for RubricError {}

fn points_ok(p: f64) -> bool {
    p.is_finite() && p >= 0.0
}

fn close(a: f64, b: f64) -> bool {
    libm::fabs(a - b) <= POINT_EPS * libm::fmax(1.0, libm::fmax(libm::fabs(a), libm::fabs(b)))
}

impl RubricSpec {
    /// Validates a document, expanding `depends_on: [ALL]`.
    pub fn from_document(doc: RubricDocument) -> Result<RubricSpec, RubricError> {
        let mut v = Vec::new();

        if !(doc.total_points.is_finite() && doc.total_points > 0.0) {
            v.push(Violation::NonPositiveTotal { total: doc.total_points });
        }

        let mut category_ids = BTreeSet::new();
        for c in &doc.categories {
            if !category_ids.insert(c.id.as_str()) {
                v.push(Violation::DuplicateCategory { category_id: c.id.clone() });
            }
            if !points_ok(c.points) {
                v.push(Violation::InvalidPoints {
                    item: format!("category \"{}\"", c.id),
                    points: c.points,
                });
            }
        }

        let mut module_ids = BTreeSet::new();
        for m in &doc.modules {
            if !module_ids.insert(m.id.as_str()) {
                v.push(Violation::DuplicateModule { module_id: m.id.clone() });
            }
            if !points_ok(m.points) {
                v.push(Violation::InvalidPoints {
                    item: format!("module \"{}\"", m.id),
                    points: m.points,
                });
            }
            if !category_ids.contains(m.category.as_str()) {
                v.push(Violation::UnknownCategory {
                    module_id: m.id.clone(),
                    category_id: m.category.clone(),
                });
            }
            match (m.evaluator, &m.tests) {
                (Evaluator::Tests, None) => {
                    v.push(Violation::MissingTestSuite { module_id: m.id.clone() })
                }
                (_, Some(suite)) => {
                    for reason in suite.problems() {
                        v.push(Violation::InvalidTestSuite { module_id: m.id.clone(), reason });
                    }
                }
                _ => {}
            }
            if m.evaluator == Evaluator::Assembly && m.points != 0.0 {
                v.push(Violation::AssemblyHasPoints { module_id: m.id.clone(), points: m.points });
            }
        }

        for c in &doc.categories {
            let module_sum: f64 = doc
                .modules
                .iter()
                .filter(|m| m.category == c.id)
                .map(|m| m.points)
                .sum();
            if points_ok(c.points) && module_sum.is_finite() && !close(module_sum, c.points) {
                v.push(Violation::CategoryPointMismatch {
                    category_id: c.id.clone(),
                    declared: c.points,
                    module_sum,
                });
            }
        }
        let category_sum: f64 = doc.categories.iter().map(|c| c.points).sum();
        if doc.total_points.is_finite() && category_sum.is_finite() && !close(category_sum, doc.total_points) {
            v.push(Violation::TotalPointMismatch {
                declared: doc.total_points,
                category_sum,
            });
        }

        // Dependencies, with ALL expanded.
        let assembly: Vec<&str> = doc
            .modules
            .iter()
            .filter(|m| m.evaluator == Evaluator::Assembly)
            .map(|m| m.id.as_str())
            .collect();
        if assembly.len() > 1 {
            v.push(Violation::MultipleAssembly {
                modules: assembly.iter().map(|s| String::from(*s)).collect(),
            });
        }
        let mut modules = Vec::with_capacity(doc.modules.len());
        for m in &doc.modules {
            let mut deps: Vec<String> = Vec::new();
            for d in &m.depends_on {
                if d == ALL_MODULES {
                    for other in &doc.modules {
                        if other.id != m.id && other.evaluator != Evaluator::Assembly && !deps.contains(&other.id) {
                            deps.push(other.id.clone());
                        }
                    }
                } else if !module_ids.contains(d.as_str()) {
                    v.push(Violation::UnknownDependency {
                        module_id: m.id.clone(),
                        dependency: d.clone(),
                    });
                } else if !deps.contains(d) {
                    deps.push(d.clone());
                }
            }
            modules.push(RubricModule {
                module_id: m.id.clone(),
                category_id: m.category.clone(),
                points: m.points,
                criteria: m.criteria.clone(),
                required_inputs: m.required_inputs.clone(),
                evaluator: m.evaluator,
                test_suite: m.tests.clone(),
                depends_on: deps,
            });
        }

        let cycle = cycle_members(&modules);
        if !cycle.is_empty() {
            v.push(Violation::DependencyCycle { modules: cycle });
        }

        if let Some(asm) = modules.iter().find(|m| m.evaluator == Evaluator::Assembly) {
            let reach = reachable_dependencies(&modules, &asm.module_id);
            let missing: Vec<String> = modules
                .iter()
                .filter(|m| m.is_scored() && !reach.contains(m.module_id.as_str()))
                .map(|m| m.module_id.clone())
                .collect();
            if !missing.is_empty() {
                v.push(Violation::AssemblyIncomplete {
                    module_id: asm.module_id.clone(),
                    missing,
                });
            }
        }

        let mut artifact_ids = BTreeSet::new();
        for a in &doc.artifacts {
            if !artifact_ids.insert(a.id.as_str()) {
                v.push(Violation::DuplicateArtifact { component_id: a.id.clone() });
            }
        }

        if !v.is_empty() {
            return Err(RubricError { violations: v });
        }
        Ok(RubricSpec {
            assignment_id: doc.assignment_id,
            title: doc.title,
            total_points: doc.total_points,
            categories: doc
                .categories
                .into_iter()
                .map(|c| RubricCategory {
                    label: if c.label.is_empty() { c.id.clone() } else { c.label },
                    category_id: c.id,
                    points: c.points,
                })
                .collect(),
            modules,
            artifacts: doc
                .artifacts
                .into_iter()
                .map(|a| ArtifactProbe { component_id: a.id, expression: a.expression })
                .collect(),
        })
    }

    pub fn module(&self, module_id: &str) -> Option<&RubricModule> {
        self.modules.iter().find(|m| m.module_id == module_id)
    }

    pub fn category(&self, category_id: &str) -> Option<&RubricCategory> {
        self.categories.iter().find(|c| c.category_id == category_id)
    }

    pub fn artifact(&self, component_id: &str) -> Option<&ArtifactProbe> {
        self.artifacts.iter().find(|a| a.component_id == component_id)
    }

    pub fn scored_modules(&self) -> impl Iterator<Item = &RubricModule> {
        self.modules.iter().filter(|m| m.is_scored())
    }

    pub fn assembly_module(&self) -> Option<&RubricModule> {
        self.modules.iter().find(|m| m.evaluator == Evaluator::Assembly)
    }

    /// Union of all modules' required inputs, in first-mention order.
    pub fn required_components(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in &self.modules {
            for c in &m.required_inputs {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        }
        out
    }

    pub fn module_points_total(&self) -> f64 {
        self.modules.iter().map(|m| m.points).sum()
    }
}

fn index_of(modules: &[RubricModule]) -> BTreeMap<&str, usize> {
    modules
        .iter()
        .enumerate()
        .map(|(i, m)| (m.module_id.as_str(), i))
        .collect()
}

// Nodes left after Kahn's algorithm, pruned of nodes that merely sit
// downstream of a cycle.
fn cycle_members(modules: &[RubricModule]) -> Vec<String> {
    let idx = index_of(modules);
    let n = modules.len();
    let deps: Vec<Vec<usize>> = modules
        .iter()
        .map(|m| m.depends_on.iter().filter_map(|d| idx.get(d.as_str()).copied()).collect())
        .collect();
    let mut alive = alloc::vec![true; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if alive[i] && deps[i].iter().all(|d| !alive[*d]) {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    loop {
        let mut changed = false;
        for i in 0..n {
            if alive[i] && !(0..n).any(|j| alive[j] && deps[j].contains(&i)) {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    modules
        .iter()
        .zip(alive)
        .filter(|(_, a)| *a)
        .map(|(m, _)| m.module_id.clone())
        .collect()
}

fn reachable_dependencies<'a>(modules: &'a [RubricModule], from: &str) -> BTreeSet<&'a str> {
    let idx = index_of(modules);
    let mut seen = BTreeSet::new();
    let mut stack: Vec<&str> = Vec::new();
    if let Some(&i) = idx.get(from) {
        stack.extend(modules[i].depends_on.iter().map(String::as_str));
    }
    while let Some(id) = stack.pop() {
        if let Some(&i) = idx.get(id) {
            let m = &modules[i];
            if seen.insert(m.module_id.as_str()) {
                stack.extend(m.depends_on.iter().map(String::as_str));
            }
        }
    }
    seen
}

/// Dependency-respecting layers of module ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub stages: Vec<Vec<String>>,
}

impl ExecutionPlan {
    pub fn stage_of(&self, module_id: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.iter().any(|m| m == module_id))
    }
}

/// Places each module at the length of its longest dependency chain, so
/// modules without dependencies land in stage 0. Within a stage, rubric
/// order is kept.
pub fn plan_execution(rubric: &RubricSpec) -> ExecutionPlan {
    let idx = index_of(&rubric.modules);
    let n = rubric.modules.len();
    let mut level: Vec<Option<usize>> = alloc::vec![None; n];
    // Validation excluded cycles, so repeated relaxation terminates in at
    // most n rounds.
    for _ in 0..=n {
        let mut done = true;
        for (i, m) in rubric.modules.iter().enumerate() {
            if level[i].is_some() {
                continue;
            }
            let mut l = 0;
            let mut ready = true;
            for d in &m.depends_on {
                match idx.get(d.as_str()).and_then(|&j| level[j]) {
                    Some(dl) => l = l.max(dl + 1),
                    None => ready = false,
                }
            }
            if ready {
                level[i] = Some(l);
            } else {
                done = false;
            }
        }
        if done {
            break;
        }
    }
    let depth = level.iter().flatten().max().map_or(0, |m| m + 1);
    let mut stages = alloc::vec![Vec::new(); depth];
    for (m, l) in rubric.modules.iter().zip(level) {
        stages[l.unwrap_or(0)].push(m.module_id.clone());
    }
    ExecutionPlan { stages }
}
