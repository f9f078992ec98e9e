//! File-backed persistence.
//!
//! Layout under the storage root:
//!
//! ```text
//! records/journal.jsonl          every record version, append-only
//! records/current/<id>.json      latest version per submission
//! submissions/<id>/<sha256>.ipynb
//! submissions/<id>/chain.json
//! submissions/<id>/report.md
//! uploads/<upload id>.csv
//! ```
//!
//! The journal is authoritative; the current index is rebuilt from it on
//! open. Writers are serialized by one lock, so concurrent updates to a
//! record each land as their own version.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use autograde_core::{ChainOutcome, GradingRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::journal::JournalError;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("no record for submission {0:?}")]
    NotFound(String),
    #[error("invalid id {0:?}: use letters, digits, '_', '-' and '.'")]
    InvalidId(String),
    #[error("version conflict for {id}: expected {expected}, found {found}")]
    Conflict { id: String, expected: u64, found: u64 },
    #[error("storage I/O error at {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt storage entry at {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// Ids become file names, so they are restricted to a safe alphabet.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 200
        && id != "."
        && !id.contains("..")
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

fn check_id(id: &str) -> Result<(), StoreError> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned {
    pub version: u64,
    pub record: GradingRecord,
}

struct Inner {
    journal: File,
    history: BTreeMap<String, Vec<GradingRecord>>,
}

pub struct Store {
    root: PathBuf,
    inner: Mutex<Inner>,
}

/// Writes via a temporary file and rename so readers never see a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = dir.join(format!(".{}.tmp-{}", path.file_name().unwrap_or_default().to_string_lossy(), uuid::Uuid::new_v4().simple()));
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_data().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        for d in ["records/current", "submissions", "uploads"] {
            let p = root.join(d);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let jpath = root.join("records/journal.jsonl");
        let (entries, journal) = crate::journal::open::<Versioned>(&jpath).map_err(|e| match e {
            JournalError::Io(source) => StoreError::Io { path: jpath.display().to_string(), source },
            JournalError::Corrupt { line, reason } => {
                StoreError::Corrupt { path: jpath.display().to_string(), reason: format!("line {line}: {reason}") }
            }
        })?;
        let mut history: BTreeMap<String, Vec<GradingRecord>> = BTreeMap::new();
        for (i, v) in entries.into_iter().enumerate() {
            let h = history.entry(v.record.submission.submission_id.clone()).or_default();
            if v.version as usize != h.len() + 1 {
                return Err(StoreError::Corrupt {
                    path: jpath.display().to_string(),
                    reason: format!("entry {}: version {} out of sequence", i + 1, v.version),
                });
            }
            h.push(v.record);
        }
        let store = Store { root, inner: Mutex::new(Inner { journal, history }) };
        {
            let inner = store.lock();
            for (id, h) in &inner.history {
                store.write_current(id, h.last().expect("non-empty history"))?;
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn write_current(&self, id: &str, record: &GradingRecord) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(record).expect("record serializes");
        write_atomic(&self.root.join("records/current").join(format!("{id}.json")), &bytes)
    }

    fn append(&self, inner: &mut Inner, record: &GradingRecord) -> Result<u64, StoreError> {
        let id = &record.submission.submission_id;
        let version = inner.history.get(id).map_or(0, Vec::len) as u64 + 1;
        let mut line = serde_json::to_string(&Versioned { version, record: record.clone() }).expect("record serializes");
        line.push('\n');
        let jpath = self.root.join("records/journal.jsonl");
        inner.journal.write_all(line.as_bytes()).map_err(io_err(&jpath))?;
        inner.journal.sync_data().map_err(io_err(&jpath))?;
        inner.history.entry(id.clone()).or_default().push(record.clone());
        self.write_current(id, record)?;
        Ok(version)
    }

    /// Stores a new version and returns its number (from 1).
    pub fn persist_record(&self, record: &GradingRecord) -> Result<u64, StoreError> {
        check_id(&record.submission.submission_id)?;
        let mut inner = self.lock();
        self.append(&mut inner, record)
    }

    /// Stores `record` only if the current version is `expected`
    /// (0 for a submission with no record yet).
    pub fn compare_and_swap(&self, expected: u64, record: &GradingRecord) -> Result<u64, StoreError> {
        let id = &record.submission.submission_id;
        check_id(id)?;
        let mut inner = self.lock();
        let found = inner.history.get(id).map_or(0, Vec::len) as u64;
        if found != expected {
            return Err(StoreError::Conflict { id: id.clone(), expected, found });
        }
        self.append(&mut inner, record)
    }

    /// Read-modify-write under the store lock.
    pub fn update<E>(
        &self,
        id: &str,
        f: impl FnOnce(&GradingRecord) -> Result<GradingRecord, E>,
    ) -> Result<Result<Versioned, E>, StoreError> {
        let mut inner = self.lock();
        let current = inner
            .history
            .get(id)
            .and_then(|h| h.last())
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.into()))?;
        match f(&current) {
            Ok(next) if next == current => {
                let version = inner.history[id].len() as u64;
                Ok(Ok(Versioned { version, record: next }))
            }
            Ok(next) => {
                if next.submission.submission_id != id {
                    return Err(StoreError::Corrupt { path: id.into(), reason: "update changed the submission id".into() });
                }
                let version = self.append(&mut inner, &next)?;
                Ok(Ok(Versioned { version, record: next }))
            }
            Err(e) => Ok(Err(e)),
        }
    }

    pub fn load_record(&self, id: &str) -> Result<GradingRecord, StoreError> {
        self.load_versioned(id).map(|v| v.record)
    }

    pub fn load_versioned(&self, id: &str) -> Result<Versioned, StoreError> {
        let inner = self.lock();
        let h = inner.history.get(id).ok_or_else(|| StoreError::NotFound(id.into()))?;
        Ok(Versioned { version: h.len() as u64, record: h.last().expect("non-empty").clone() })
    }

    /// Every version, oldest first.
    pub fn history(&self, id: &str) -> Result<Vec<GradingRecord>, StoreError> {
        self.lock().history.get(id).cloned().ok_or_else(|| StoreError::NotFound(id.into()))
    }

    /// Latest version of every record, by submission id.
    pub fn records(&self) -> Vec<GradingRecord> {
        self.lock().history.values().filter_map(|h| h.last().cloned()).collect()
    }

    /// Reads the on-disk current index directly.
    pub fn read_current_file(&self, id: &str) -> Result<GradingRecord, StoreError> {
        check_id(id)?;
        let p = self.root.join("records/current").join(format!("{id}.json"));
        let bytes = fs::read(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(id.into()),
            _ => StoreError::Io { path: p.display().to_string(), source: e },
        })?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt { path: p.display().to_string(), reason: e.to_string() })
    }

    fn submission_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        check_id(id)?;
        Ok(self.root.join("submissions").join(id))
    }

    /// Content-addressed notebook copy; returns its path.
    pub fn store_notebook(&self, id: &str, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        let digest = hex::encode(Sha256::digest(bytes));
        let p = self.submission_dir(id)?.join(format!("{digest}.ipynb"));
        if !p.exists() {
            write_atomic(&p, bytes)?;
        }
        Ok(p)
    }

    /// A working directory for an incoming submission's files.
    pub fn intake_dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        let p = self.submission_dir(id)?.join(format!("intake-{}", uuid::Uuid::new_v4().simple()));
        fs::create_dir_all(&p).map_err(io_err(&p))?;
        Ok(p)
    }

    pub fn store_chain(&self, id: &str, chain: &ChainOutcome) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(chain).expect("chain serializes");
        write_atomic(&self.submission_dir(id)?.join("chain.json"), &bytes)
    }

    pub fn load_chain(&self, id: &str) -> Result<ChainOutcome, StoreError> {
        let p = self.submission_dir(id)?.join("chain.json");
        match fs::read(&p) {
            Ok(b) => serde_json::from_slice(&b).map_err(|e| StoreError::Corrupt { path: p.display().to_string(), reason: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(id.into())),
            Err(e) => Err(StoreError::Io { path: p.display().to_string(), source: e }),
        }
    }

    pub fn store_report(&self, id: &str, markdown: &str) -> Result<(), StoreError> {
        write_atomic(&self.submission_dir(id)?.join("report.md"), markdown.as_bytes())
    }

    /// Saves an uploaded score CSV and returns its id.
    pub fn store_upload(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        write_atomic(&self.root.join("uploads").join(format!("{id}.csv")), bytes)?;
        Ok(id)
    }

    pub fn load_upload(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        check_id(id)?;
        let p = self.root.join("uploads").join(format!("{id}.csv"));
        fs::read(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(id.into()),
            _ => StoreError::Io { path: p.display().to_string(), source: e },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids() {
        assert!(valid_id("s-01_a.b"));
        for bad in ["", ".", "..", "a/b", "a..b", "a b", "ü"] {
            assert!(!valid_id(bad), "{bad}");
        }
    }
}
