//! Submission intake: CSV manifests, notebook directories and single files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use autograde_core::{parse_notebook, CanonicalSubmission, NotebookError, SubmissionRef};

pub const MANIFEST_HEADER: [&str; 4] = ["submission_id", "student_id", "path", "assignment_id"];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("manifest is not valid CSV: {0}")]
    Csv(String),
    #[error("manifest lacks column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("duplicate submission_id {id:?} on rows {rows:?}")]
    DuplicateId { id: String, rows: Vec<usize> },
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// Parses a manifest. Relative paths are resolved against `base`. Rows are
/// numbered from 1 for the first data row.
pub fn load_manifest(csv_text: &str, base: Option<&Path>) -> Result<Vec<SubmissionRef>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(csv_text.as_bytes());
    let headers = rdr.headers().map_err(|e| ManifestError::Csv(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<String> = MANIFEST_HEADER
        .iter()
        .filter(|c| col(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ManifestError::MissingColumns(missing));
    }
    let idx: Vec<usize> = MANIFEST_HEADER.iter().map(|c| col(c).unwrap()).collect();

    let mut refs = Vec::new();
    let mut rows_by_id: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| ManifestError::Csv(e.to_string()))?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("").to_string();
        let (submission_id, student_id, path, assignment_id) = (field(0), field(1), field(2), field(3));
        if submission_id.is_empty() {
            return Err(ManifestError::BadRow { row: row_no, reason: "empty submission_id".into() });
        }
        if path.is_empty() {
            return Err(ManifestError::BadRow { row: row_no, reason: "empty path".into() });
        }
        let source_path = match base {
            Some(b) if Path::new(&path).is_relative() => b.join(&path).to_string_lossy().into_owned(),
            _ => path,
        };
        rows_by_id.entry(submission_id.clone()).or_default().push(row_no);
        refs.push(SubmissionRef {
            submission_id,
            student_id,
            source_path,
            assignment_id,
        });
    }
    if let Some((id, rows)) = rows_by_id.into_iter().find(|(_, rows)| rows.len() > 1) {
        return Err(ManifestError::DuplicateId { id, rows });
    }
    Ok(refs)
}

pub fn write_manifest(refs: &[SubmissionRef]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER).expect("in-memory write");
    for r in refs {
        w.write_record([&r.submission_id, &r.student_id, &r.source_path, &r.assignment_id])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// One ref per `*.ipynb` under `dir` (non-recursive), ordered by file name.
/// The file stem is used as both submission and student id.
pub fn scan_directory(dir: &Path, assignment_id: &str) -> std::io::Result<Vec<SubmissionRef>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ipynb"))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            SubmissionRef {
                submission_id: stem.clone(),
                student_id: stem,
                source_path: p.to_string_lossy().into_owned(),
                assignment_id: assignment_id.into(),
            }
        })
        .collect())
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: String, source: std::io::Error },
    #[error(transparent)]
    Malformed(#[from] NotebookError),
}

/// Non-notebook regular files next to the notebook.
pub fn sibling_attachments(source_path: &Path) -> Vec<PathBuf> {
    let Some(dir) = source_path.parent() else { return Vec::new() };
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_none_or(|x| x != "ipynb"))
                .collect()
        })
        .unwrap_or_default();
    out.sort();
    out
}

/// Reads and parses a submission, recording sibling files as attachments.
pub fn load_submission(sref: &SubmissionRef) -> Result<(CanonicalSubmission, Vec<PathBuf>), IngestError> {
    let path = Path::new(&sref.source_path);
    let raw = fs::read(path).map_err(|source| IngestError::Unreadable {
        path: sref.source_path.clone(),
        source,
    })?;
    let mut sub = parse_notebook(&raw, sref.clone())?;
    let attachments = sibling_attachments(path);
    sub.attachments = attachments
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    Ok((sub, attachments))
}

/// Parses every file independently; one bad file never stops the rest.
pub fn load_all(refs: &[SubmissionRef]) -> Vec<Result<(CanonicalSubmission, Vec<PathBuf>), IngestError>> {
    refs.iter().map(load_submission).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_rows_in_order() {
        let text = "submission_id,student_id,path,assignment_id\ns1,u1,a.ipynb,a3\ns2,u2,/abs/b.ipynb,a3\n";
        let refs = load_manifest(text, Some(Path::new("/base"))).unwrap();
        assert_eq!(refs.len(), 2);
        assert_eq!(refs[0].source_path, "/base/a.ipynb");
        assert_eq!(refs[1].source_path, "/abs/b.ipynb");
        assert_eq!(refs[1].student_id, "u2");
    }

    #[test]
    fn manifest_errors() {
        assert!(load_manifest("submission_id,student_id,path,assignment_id\n", None).unwrap().is_empty());
        let dup = "submission_id,student_id,path,assignment_id\ns1,u1,a,a3\ns2,u2,b,a3\ns1,u3,c,a3\n";
        assert_eq!(
            load_manifest(dup, None),
            Err(ManifestError::DuplicateId { id: "s1".into(), rows: vec![1, 3] })
        );
        let err = load_manifest("submission_id,path\ns1,a\n", None).unwrap_err();
        assert_eq!(err, ManifestError::MissingColumns(vec!["student_id".into(), "assignment_id".into()]));
        assert!(err.to_string().contains("student_id"));
    }

    #[test]
    fn quoted_fields_round_trip() {
        let refs = vec![SubmissionRef {
            submission_id: "s,1".into(),
            student_id: "O\"Brien".into(),
            source_path: "/x/with space.ipynb".into(),
            assignment_id: "a3".into(),
        }];
        assert_eq!(load_manifest(&write_manifest(&refs), None).unwrap(), refs);
    }
}
