#![allow(dead_code)]

use autograde_core::{parse_notebook, CanonicalSubmission, SubmissionRef};
use serde_json::json;

/// Notebook JSON with the given cells; `("code", src)` or `("markdown", src)`.
pub fn notebook_json(cells: &[(&str, &str)]) -> String {
    let cells: Vec<_> = cells
        .iter()
        .map(|(kind, src)| {
            let lines: Vec<String> = src.split_inclusive('\n').map(String::from).collect();
            json!({"cell_type": kind, "metadata": {}, "source": lines, "outputs": []})
        })
        .collect();
    json!({"cells": cells, "metadata": {}, "nbformat": 4, "nbformat_minor": 5}).to_string()
}

pub fn submission(id: &str, cells: &[(&str, &str)]) -> CanonicalSubmission {
    let sref = SubmissionRef {
        submission_id: id.into(),
        student_id: format!("student-{id}"),
        source_path: format!("{id}.ipynb"),
        assignment_id: "a3".into(),
    };
    parse_notebook(notebook_json(cells).as_bytes(), sref).unwrap()
}

pub fn code(id: &str, src: &str) -> CanonicalSubmission {
    submission(id, &[("code", src)])
}
