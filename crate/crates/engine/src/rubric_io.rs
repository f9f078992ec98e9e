//! Rubric YAML loading.

use std::path::Path;

use autograde_core::{RubricDocument, RubricError, RubricSpec};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("rubric YAML does not match the schema: {0}")]
    Yaml(String),
    #[error(transparent)]
    Invalid(#[from] RubricError),
    #[error("cannot read rubric {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub fn load_rubric(yaml_text: &str) -> Result<RubricSpec, LoadError> {
    let doc: RubricDocument = serde_yaml::from_str(yaml_text).map_err(|e| LoadError::Yaml(e.to_string()))?;
    Ok(RubricSpec::from_document(doc)?)
}

pub fn load_rubric_file(path: &Path) -> Result<RubricSpec, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_rubric(&text)
}

/// The bundled example rubric for the non-linear model fitting assignment.
pub const ASSIGNMENT3_YAML: &str = include_str!("../fixtures/assignment3.yaml");
/// Mock responses matching [`ASSIGNMENT3_YAML`].
pub const ASSIGNMENT3_MOCK_YAML: &str = include_str!("../fixtures/assignment3.mock.yaml");
