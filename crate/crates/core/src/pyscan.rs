//! Lightweight discovery of top-level Python function definitions.
//!
//! This is not a parser. It tracks strings, comments and bracket depth well
//! enough to find `def` statements at column zero and split their parameter
//! lists, which is all signature checks need. Run it only on code that has
//! passed a syntax check.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::notebook::CanonicalSubmission;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub cell_index: usize,
}

impl FunctionDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionMatch {
    pub found: bool,
    pub arity_matches: bool,
}

/// Looks up a top-level definition across all code cells. When a name is
/// defined more than once the last definition wins, as it would at runtime.
pub fn find_function(sub: &CanonicalSubmission, name: &str, expected_arity: usize) -> FunctionMatch {
    let last = sub
        .code_cells()
        .flat_map(|cell| top_level_functions(&cell.source, cell.index))
        .filter(|f| f.name == name)
        .last();
    match last {
        Some(f) => FunctionMatch {
            found: true,
            arity_matches: f.arity() == expected_arity,
        },
        None => FunctionMatch {
            found: false,
            arity_matches: false,
        },
    }
}

/// All top-level `def` / `async def` statements in `source`, in order.
pub fn top_level_functions(source: &str, cell_index: usize) -> Vec<FunctionDef> {
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut depth = 0usize;
    let mut line_start = true;
    while i < bytes.len() {
        let c = bytes[i];
        if line_start && depth == 0 {
            line_start = false;
            let rest = &source[i..];
            let after = rest
                .strip_prefix("async ")
                .map(str::trim_start)
                .unwrap_or(rest);
            if let Some(sig) = after.strip_prefix("def ") {
                let offset = source.len() - sig.len();
                if let Some((def, end)) = parse_signature(source, offset, cell_index) {
                    out.push(def);
                    i = end;
                    continue;
                }
            }
        }
        match c {
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'\'' | b'"' => {
                i = skip_string(bytes, i);
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth = depth.saturating_sub(1),
            b'\n' => {
                // A trailing backslash continues the logical line.
                let continued = i > 0 && bytes[i - 1] == b'\\';
                if !continued {
                    line_start = true;
                }
            }
            _ => {}
        }
        i += 1;
    }
    out
}

// Returns the index just past the string literal starting at `start`.
fn skip_string(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let triple = bytes.len() >= start + 3 && bytes[start + 1] == quote && bytes[start + 2] == quote;
    let mut i = start + if triple { 3 } else { 1 };
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\\' {
            i += 2;
            continue;
        }
        if triple {
            if c == quote && bytes.get(i + 1) == Some(&quote) && bytes.get(i + 2) == Some(&quote) {
                return i + 3;
            }
        } else if c == quote {
            return i + 1;
        } else if c == b'\n' {
            return i;
        }
        i += 1;
    }
    bytes.len()
}

fn parse_signature(source: &str, offset: usize, cell_index: usize) -> Option<(FunctionDef, usize)> {
    let bytes = source.as_bytes();
    let mut i = offset;
    while i < bytes.len() && bytes[i] == b' ' {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80) {
        i += 1;
    }
    let name = &source[name_start..i];
    if name.is_empty() {
        return None;
    }
    while i < bytes.len() && bytes[i] == b' ' {
        i += 1;
    }
    if bytes.get(i) != Some(&b'(') {
        return None;
    }
    i += 1;
    let params_start = i;
    let mut depth = 0usize;
    let mut pieces = Vec::new();
    let mut piece_start = params_start;
    while i < bytes.len() {
        match bytes[i] {
            b'\'' | b'"' => {
                i = skip_string(bytes, i);
                continue;
            }
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'(' | b'[' | b'{' => depth += 1,
            b')' if depth == 0 => {
                pieces.push(&source[piece_start..i]);
                let params = pieces
                    .into_iter()
                    .map(strip_comments)
                    .map(|p| p.trim().into())
                    .filter(|p: &String| !p.is_empty() && p != "*" && p != "/")
                    .collect();
                return Some((
                    FunctionDef {
                        name: name.into(),
                        params,
                        cell_index,
                    },
                    i + 1,
                ));
            }
            b')' | b']' | b'}' => depth = depth.saturating_sub(1),
            b',' if depth == 0 => {
                pieces.push(&source[piece_start..i]);
                piece_start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    None
}

fn strip_comments(piece: &str) -> String {
    piece
        .split('\n')
        .map(|line| match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join(" ")
}
