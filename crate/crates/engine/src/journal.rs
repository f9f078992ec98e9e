//! JSON-lines journals shared by the record store and the job book.

use std::fs::{File, OpenOptions};
use std::path::Path;

use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Reads every entry and opens the file for appending. An unparseable final
/// line is an interrupted append; it is cut off so the next entry starts on
/// a fresh line.
pub fn open<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, File), JournalError> {
    let mut entries = Vec::new();
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let mut offset = 0usize;
        let mut cut = None;
        for (i, raw) in lines.iter().enumerate() {
            let line = raw.trim();
            if !line.is_empty() {
                match serde_json::from_str::<T>(line) {
                    Ok(v) => entries.push(v),
                    Err(e) if i + 1 == lines.len() => {
                        log::warn!("{}: dropping incomplete final entry: {e}", path.display());
                        cut = Some(offset);
                    }
                    Err(e) => return Err(JournalError::Corrupt { line: i + 1, reason: e.to_string() }),
                }
            }
            offset += raw.len();
        }
        let cut = cut.or((!text.is_empty() && !text.ends_with('\n')).then_some(text.len()));
        if let Some(at) = cut {
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(at as u64)?;
            if at == text.len() {
                // A complete entry without its newline.
                use std::io::Write;
                let mut f = OpenOptions::new().append(true).open(path)?;
                f.write_all(b"\n")?;
            }
            f.sync_all()?;
        }
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    Ok((entries, file))
}
