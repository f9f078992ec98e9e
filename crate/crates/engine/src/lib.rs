//! Autograding engine: sandboxed test runs, the language-model feedback
//! chain, persistence, job orchestration, the HTTP API and the CLI.
//!
//! Pure grading logic lives in `autograde_core`; this crate adds
//! everything that touches processes, files, sockets and clocks.

pub mod api;
pub mod backend;
pub mod chain;
pub mod cli;
pub mod export;
pub mod ingest;
pub mod jobs;
pub mod journal;
pub mod orchestrator;
pub mod pipeline;
pub mod rubric_io;
pub mod sandbox;
pub mod store;

use autograde_core::Timestamp;

/// Wall-clock time in milliseconds since the epoch.
pub fn now() -> Timestamp {
    let d = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    Timestamp(d.as_millis() as i64)
}
