//! Notebook submissions in canonical form.
//!
//! The accepted container is the cell-array JSON notebook layout: a top-level
//! `"cells"` array whose entries carry a `"cell_type"` and a `"source"` that is
//! either a string or an array of line strings. Stored outputs are ignored;
//! grading re-executes code.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::rubric::RubricSpec;

/// Identity and location of one submission.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRef {
    pub submission_id: String,
    pub student_id: String,
    pub source_path: String,
    pub assignment_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotebookCell {
    pub kind: CellKind,
    pub source: String,
    /// Position among retained cells, contiguous from 0.
    pub index: usize,
}

/// A parsed, standardized submission.
///
/// A submission without any code cell is still representable; flagging
/// happens downstream through [`check_completeness`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSubmission {
    pub submission: SubmissionRef,
    pub cells: Vec<NotebookCell>,
    pub parse_warnings: Vec<String>,
    /// File names supplied alongside the notebook (data files and the like).
    /// Only their presence is recorded.
    #[serde(default)]
    pub attachments: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum NotebookError {
    #[error("malformed notebook: not UTF-8 text")]
    NotUtf8,
    #[error("malformed notebook: invalid JSON ({0})")]
    InvalidJson(String),
    #[error("malformed notebook: no \"cells\" array")]
    MissingCells,
}

/// Parses notebook JSON into a [`CanonicalSubmission`].
///
/// Cells with kinds other than `code` and `markdown` are dropped with a
/// warning, as are entries that are not cell objects.
pub fn parse_notebook(
    raw: &[u8],
    submission: SubmissionRef,
) -> Result<CanonicalSubmission, NotebookError> {
    let text = core::str::from_utf8(raw).map_err(|_| NotebookError::NotUtf8)?;
    let doc: Value =
        serde_json::from_str(text).map_err(|e| NotebookError::InvalidJson(e.to_string()))?;
    let cells = doc
        .get("cells")
        .and_then(Value::as_array)
        .ok_or(NotebookError::MissingCells)?;

    let mut retained = Vec::with_capacity(cells.len());
    let mut warnings = Vec::new();
    for (position, cell) in cells.iter().enumerate() {
        let kind = match cell.get("cell_type").and_then(Value::as_str) {
            Some("code") => CellKind::Code,
            Some("markdown") => CellKind::Markdown,
            Some(other) => {
                warnings.push(format!("dropped cell {position}: unsupported cell type \"{other}\""));
                continue;
            }
            None => {
                warnings.push(format!("dropped cell {position}: missing cell_type"));
                continue;
            }
        };
        let source = match cell.get("source") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Array(lines)) => {
                let mut joined = String::new();
                for line in lines {
                    match line.as_str() {
                        Some(l) => joined.push_str(l),
                        None => warnings
                            .push(format!("cell {position}: ignored non-string source line")),
                    }
                }
                joined
            }
            Some(Value::Null) | None => {
                warnings.push(format!("cell {position}: missing source, treated as empty"));
                String::new()
            }
            Some(_) => {
                warnings.push(format!("cell {position}: source is neither string nor array"));
                String::new()
            }
        };
        let index = retained.len();
        retained.push(NotebookCell { kind, source, index });
    }

    Ok(CanonicalSubmission {
        submission,
        cells: retained,
        parse_warnings: warnings,
        attachments: Vec::new(),
    })
}

impl CanonicalSubmission {
    pub fn has_kind(&self, kind: CellKind) -> bool {
        self.cells.iter().any(|c| c.kind == kind)
    }

    pub fn code_cells(&self) -> impl Iterator<Item = &NotebookCell> {
        self.cells.iter().filter(|c| c.kind == CellKind::Code)
    }

    pub fn markdown_cells(&self) -> impl Iterator<Item = &NotebookCell> {
        self.cells.iter().filter(|c| c.kind == CellKind::Markdown)
    }

    /// The code cells concatenated into one program, in document order.
    ///
    /// IPython magics (`%...`) and shell escapes (`!...`) are turned into
    /// comments so that line numbers are preserved.
    pub fn program(&self) -> String {
        let mut out = String::new();
        for cell in self.code_cells() {
            for line in cell.source.split('\n') {
                let trimmed = line.trim_start();
                if trimmed.starts_with('%') || trimmed.starts_with('!') {
                    out.push_str("# ");
                }
                out.push_str(line.trim_end_matches('\r'));
                out.push('\n');
            }
        }
        out
    }

    /// Maps a 1-based line of [`program`](Self::program) back to
    /// `(cell index, 1-based line within the cell)`.
    pub fn locate_line(&self, line: usize) -> Option<(usize, usize)> {
        let mut remaining = line.checked_sub(1)?;
        for cell in self.code_cells() {
            let n = cell.source.split('\n').count();
            if remaining < n {
                return Some((cell.index, remaining + 1));
            }
            remaining -= n;
        }
        None
    }

    /// True when an attachment's stem (the name up to its first `.`) equals
    /// `component`.
    pub fn has_attachment(&self, component: &str) -> bool {
        self.attachments.iter().any(|name| {
            let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
            base.split('.').next() == Some(component)
        })
    }
}

/// Which rubric-required components a submission can supply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub has_code: bool,
    pub has_markdown: bool,
    pub missing_components: Vec<String>,
    pub is_complete: bool,
}

impl CompletenessReport {
    pub fn is_missing(&self, component: &str) -> bool {
        self.missing_components.iter().any(|c| c == component)
    }
}

/// The component ids `code` and `markdown` resolve to cells of that kind.
/// Components the rubric declares as artifacts are derived from running the
/// code, so they are satisfiable whenever code exists. Any other id must be
/// matched by an attachment.
pub fn check_completeness(sub: &CanonicalSubmission, rubric: &RubricSpec) -> CompletenessReport {
    let has_code = sub.has_kind(CellKind::Code);
    let has_markdown = sub.has_kind(CellKind::Markdown);
    let missing_components: Vec<String> = rubric
        .required_components()
        .into_iter()
        .filter(|component| {
            let satisfied = match component.as_str() {
                "code" => has_code,
                "markdown" => has_markdown,
                other if rubric.artifact(other).is_some() => has_code,
                other => sub.has_attachment(other),
            };
            !satisfied
        })
        .collect();
    let is_complete = missing_components.is_empty() && has_code;
    CompletenessReport {
        has_code,
        has_markdown,
        missing_components,
        is_complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sref() -> SubmissionRef {
        SubmissionRef {
            submission_id: "s1".into(),
            student_id: "u1".into(),
            source_path: "s1.ipynb".into(),
            assignment_id: "a3".into(),
        }
    }

    #[test]
    fn parses_code_and_markdown_in_order() {
        let raw = br##"{"cells": [
            {"cell_type": "code", "source": "print(1)", "outputs": []},
            {"cell_type": "markdown", "source": ["# Title\n", "text"]}
        ], "nbformat": 4}"##;
        let sub = parse_notebook(raw, sref()).unwrap();
        assert_eq!(sub.cells.len(), 2);
        assert_eq!(sub.cells[0].kind, CellKind::Code);
        assert_eq!(sub.cells[0].source, "print(1)");
        assert_eq!(sub.cells[1].kind, CellKind::Markdown);
        assert_eq!(sub.cells[1].source, "# Title\ntext");
        assert!(sub.parse_warnings.is_empty());
    }

    #[test]
    fn not_json_is_malformed() {
        assert!(matches!(
            parse_notebook(b"not json", sref()),
            Err(NotebookError::InvalidJson(_))
        ));
        assert_eq!(
            parse_notebook(br##"{"metadata": {}}"##, sref()),
            Err(NotebookError::MissingCells)
        );
        assert_eq!(parse_notebook(&[0xff, 0xfe], sref()), Err(NotebookError::NotUtf8));
    }

    #[test]
    fn raw_cells_are_dropped_with_warning() {
        let raw = br##"{"cells": [
            {"cell_type": "markdown", "source": "m"},
            {"cell_type": "raw", "source": "r"},
            {"cell_type": "code", "source": "c"}
        ]}"##;
        let sub = parse_notebook(raw, sref()).unwrap();
        assert_eq!(sub.cells.len(), 2);
        assert_eq!(sub.parse_warnings.len(), 1);
        assert_eq!(sub.cells[1].index, 1);
        assert_eq!(sub.cells[1].kind, CellKind::Code);
    }

    #[test]
    fn program_comments_out_magics_and_maps_lines() {
        let raw = br##"{"cells": [
            {"cell_type": "code", "source": ["%matplotlib inline\n", "x = 1"]},
            {"cell_type": "markdown", "source": "m"},
            {"cell_type": "code", "source": "!pip install foo\ny = 2"}
        ]}"##;
        let sub = parse_notebook(raw, sref()).unwrap();
        assert_eq!(
            sub.program(),
            "# %matplotlib inline\nx = 1\n# !pip install foo\ny = 2\n"
        );
        assert_eq!(sub.locate_line(1), Some((0, 1)));
        assert_eq!(sub.locate_line(4), Some((2, 2)));
        assert_eq!(sub.locate_line(5), None);
        assert_eq!(sub.locate_line(0), None);
    }

    #[test]
    fn attachment_stems() {
        let mut sub = parse_notebook(br##"{"cells": []}"##, sref()).unwrap();
        sub.attachments = vec!["data/data_file.csv".into(), "notes.txt".into()];
        assert!(sub.has_attachment("data_file"));
        assert!(sub.has_attachment("notes"));
        assert!(!sub.has_attachment("data"));
    }
}
