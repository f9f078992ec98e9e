//! Grading jobs and their durable journal.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use autograde_core::{SubmissionRef, Timestamp};
use serde::{Deserialize, Serialize};

use crate::journal::JournalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Flagged,
    FailedOperator,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Flagged | JobState::FailedOperator)
    }

    fn rank(self) -> u8 {
        match self {
            JobState::Queued => 0,
            JobState::Running => 1,
            _ => 2,
        }
    }

    /// Transitions only move forward; terminal states are final.
    pub fn can_become(self, next: JobState) -> bool {
        next.rank() > self.rank()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Running => "running",
            JobState::Completed => "completed",
            JobState::Flagged => "flagged",
            JobState::FailedOperator => "failed_operator",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    #[serde(rename = "ref")]
    pub submission: SubmissionRef,
    pub assignment_id: String,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_id: Option<String>,
    pub enqueued_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<Timestamp>,
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("unknown job {0:?}")]
    Unknown(String),
    #[error("job {id}: cannot move from {from:?} to {to:?}")]
    Backwards { id: String, from: JobState, to: JobState },
    #[error("job journal I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("job journal line {line} is corrupt: {reason}")]
    Corrupt { line: usize, reason: String },
}

/// Every job's latest state, backed by an append-only `jobs.jsonl`. Each
/// line is a full job snapshot; replay keeps the last one per id.
pub struct JobBook {
    path: PathBuf,
    file: File,
    jobs: BTreeMap<String, Job>,
    order: Vec<String>,
}

impl JobBook {
    pub fn open(path: &Path) -> Result<JobBook, JobError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let (entries, file) = crate::journal::open::<Job>(path).map_err(|e| match e {
            JournalError::Io(io) => JobError::Io(io),
            JournalError::Corrupt { line, reason } => JobError::Corrupt { line, reason },
        })?;
        let mut jobs = BTreeMap::new();
        let mut order = Vec::new();
        for job in entries {
            if !jobs.contains_key(&job.job_id) {
                order.push(job.job_id.clone());
            }
            jobs.insert(job.job_id.clone(), job);
        }
        Ok(JobBook { path: path.to_path_buf(), file, jobs, order })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&mut self, job: &Job) -> Result<(), JobError> {
        let mut line = serde_json::to_string(job).expect("job serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }

    pub fn enqueue(&mut self, submission: SubmissionRef, batch_id: Option<String>, at: Timestamp) -> Result<Job, JobError> {
        let job = Job {
            job_id: uuid::Uuid::new_v4().simple().to_string(),
            assignment_id: submission.assignment_id.clone(),
            submission,
            state: JobState::Queued,
            error_detail: None,
            batch_id,
            enqueued_at: at,
            finished_at: None,
        };
        self.write(&job)?;
        self.order.push(job.job_id.clone());
        self.jobs.insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    pub fn advance(&mut self, job_id: &str, to: JobState, detail: Option<String>, at: Timestamp) -> Result<Job, JobError> {
        let mut job = self.jobs.get(job_id).cloned().ok_or_else(|| JobError::Unknown(job_id.into()))?;
        if !job.state.can_become(to) {
            return Err(JobError::Backwards { id: job_id.into(), from: job.state, to });
        }
        job.state = to;
        job.error_detail = detail;
        if to.is_terminal() {
            job.finished_at = Some(at);
        }
        self.write(&job)?;
        self.jobs.insert(job_id.into(), job.clone());
        Ok(job)
    }

    pub fn get(&self, job_id: &str) -> Option<&Job> {
        self.jobs.get(job_id)
    }

    /// All jobs in enqueue order.
    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.order.iter().map(|id| &self.jobs[id])
    }

    /// Jobs without a terminal state, in enqueue order.
    pub fn pending(&self) -> Vec<Job> {
        self.jobs().filter(|j| !j.state.is_terminal()).cloned().collect()
    }
}
