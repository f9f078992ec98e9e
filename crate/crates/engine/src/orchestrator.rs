//! Job coordination: one coordinator thread owns the job journal and all
//! record writes; a bounded worker pool grades; everything else talks to the
//! coordinator by message.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use autograde_core::prompt::PromptSet;
use autograde_core::{
    apply_review, render_student_report, ChainOutcome, GradingRecord, QaStatus, ReviewDecision, ReviewError, RubricSpec,
    SubmissionRef,
};
use crossbeam_channel::{unbounded, Receiver, Sender};
use serde::Serialize;

use crate::backend::Backend;
use crate::chain::RetryPolicy;
use crate::jobs::{Job, JobBook, JobError, JobState};
use crate::now;
use crate::pipeline::{GradeOutput, Grader};
use crate::sandbox::{Sandbox, SandboxConfig};
use crate::store::{Store, StoreError};

#[derive(Clone)]
pub struct EngineConfig {
    pub parallelism: usize,
    pub sandbox: SandboxConfig,
    pub backend: Arc<dyn Backend>,
    pub storage_root: PathBuf,
    pub retry: RetryPolicy,
    pub prompts: PromptSet,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("no rubric loaded for assignment {0:?}")]
    UnknownAssignment(String),
    #[error("invalid submission id {0:?}")]
    InvalidSubmissionId(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Jobs(#[from] JobError),
    #[error("engine has shut down")]
    Stopped,
    #[error("timed out waiting for jobs")]
    WaitTimeout,
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewFailure {
    #[error(transparent)]
    Invalid(#[from] ReviewError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("engine has shut down")]
    Stopped,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StateCounts {
    pub completed: usize,
    pub flagged: usize,
    pub failed_operator: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BatchResult {
    pub batch_id: String,
    pub jobs: Vec<Job>,
    pub counts: StateCounts,
}

impl BatchResult {
    fn new(batch_id: String, jobs: Vec<Job>) -> Self {
        let mut counts = StateCounts::default();
        for j in &jobs {
            match j.state {
                JobState::Completed => counts.completed += 1,
                JobState::Flagged => counts.flagged += 1,
                JobState::FailedOperator => counts.failed_operator += 1,
                JobState::Queued | JobState::Running => {}
            }
        }
        BatchResult { batch_id, jobs, counts }
    }
}

struct WorkItem {
    job: Job,
    rubric: Arc<RubricSpec>,
}

enum Msg {
    Enqueue {
        sref: SubmissionRef,
        batch: Option<String>,
        reply: Sender<Result<Job, EngineError>>,
    },
    Started(String),
    Finished {
        job_id: String,
        result: Result<Box<GradeOutput>, String>,
    },
    Review {
        id: String,
        decision: ReviewDecision,
        reply: Sender<Result<GradingRecord, ReviewFailure>>,
    },
    Shutdown,
}

struct Shared {
    jobs: RwLock<BTreeMap<String, Job>>,
    generation: Mutex<u64>,
    changed: Condvar,
    rubrics: RwLock<BTreeMap<String, Arc<RubricSpec>>>,
}

impl Shared {
    fn publish(&self, job: &Job) {
        self.jobs.write().expect("job snapshot").insert(job.job_id.clone(), job.clone());
        *self.generation.lock().expect("generation") += 1;
        self.changed.notify_all();
    }
}

/// A running engine. Dropping it stops the coordinator and workers once
/// in-flight jobs finish; queued jobs stay in the journal for the next start.
pub struct Engine {
    tx: Sender<Msg>,
    shared: Arc<Shared>,
    store: Arc<Store>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl Engine {
    /// Opens storage, replays unfinished jobs and starts the pool.
    pub fn start(cfg: EngineConfig, rubrics: Vec<RubricSpec>) -> Result<Engine, EngineError> {
        if cfg.parallelism == 0 {
            return Err(EngineError::ZeroParallelism);
        }
        let store = Arc::new(Store::open(&cfg.storage_root)?);
        let book = JobBook::open(&cfg.storage_root.join("jobs.jsonl"))?;
        let shared = Arc::new(Shared {
            jobs: RwLock::new(book.jobs().map(|j| (j.job_id.clone(), j.clone())).collect()),
            generation: Mutex::new(0),
            changed: Condvar::new(),
            rubrics: RwLock::new(rubrics.into_iter().map(|r| (r.assignment_id.clone(), Arc::new(r))).collect()),
        });
        let (tx, rx) = unbounded::<Msg>();
        let (work_tx, work_rx) = unbounded::<WorkItem>();

        let mut threads = Vec::with_capacity(cfg.parallelism + 1);
        let sandbox = Arc::new(Sandbox::new(cfg.sandbox.clone()));
        for i in 0..cfg.parallelism {
            let work_rx = work_rx.clone();
            let tx = tx.clone();
            let sandbox = sandbox.clone();
            let cfg = cfg.clone();
            threads.push(
                std::thread::Builder::new()
                    .name(format!("grader-{i}"))
                    .spawn(move || worker(work_rx, tx, &sandbox, &cfg))
                    .expect("spawn worker"),
            );
        }
        drop(work_rx);

        let coord = Coordinator { book, store: store.clone(), shared: shared.clone(), work_tx };
        threads.push(
            std::thread::Builder::new()
                .name("coordinator".into())
                .spawn(move || coord.run(rx))
                .expect("spawn coordinator"),
        );
        Ok(Engine { tx, shared, store, threads: Mutex::new(threads) })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn add_rubric(&self, rubric: RubricSpec) {
        self.shared.rubrics.write().expect("rubrics").insert(rubric.assignment_id.clone(), Arc::new(rubric));
    }

    pub fn rubric(&self, assignment_id: &str) -> Option<Arc<RubricSpec>> {
        self.shared.rubrics.read().expect("rubrics").get(assignment_id).cloned()
    }

    pub fn submit(&self, sref: SubmissionRef) -> Result<Job, EngineError> {
        self.submit_in(sref, None)
    }

    fn submit_in(&self, sref: SubmissionRef, batch: Option<String>) -> Result<Job, EngineError> {
        let (reply, rx) = crossbeam_channel::bounded(1);
        self.tx.send(Msg::Enqueue { sref, batch, reply }).map_err(|_| EngineError::Stopped)?;
        rx.recv().map_err(|_| EngineError::Stopped)?
    }

    pub fn job(&self, job_id: &str) -> Option<Job> {
        self.shared.jobs.read().expect("job snapshot").get(job_id).cloned()
    }

    pub fn jobs(&self) -> Vec<Job> {
        self.shared.jobs.read().expect("job snapshot").values().cloned().collect()
    }

    /// Blocks until every listed job is terminal.
    pub fn wait(&self, job_ids: &[String], timeout: Option<Duration>) -> Result<Vec<Job>, EngineError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut generation = self.shared.generation.lock().expect("generation");
        loop {
            let done: Option<Vec<Job>> = {
                let jobs = self.shared.jobs.read().expect("job snapshot");
                job_ids
                    .iter()
                    .map(|id| jobs.get(id).filter(|j| j.state.is_terminal()).cloned())
                    .collect()
            };
            if let Some(done) = done {
                return Ok(done);
            }
            match deadline {
                Some(d) => {
                    let left = d.checked_duration_since(Instant::now()).ok_or(EngineError::WaitTimeout)?;
                    generation = self.shared.changed.wait_timeout(generation, left).expect("generation").0;
                }
                None => generation = self.shared.changed.wait(generation).expect("generation"),
            }
        }
    }

    /// Enqueues a manifest and waits for every job to finish.
    pub fn run_batch(&self, manifest: &[SubmissionRef]) -> Result<BatchResult, EngineError> {
        let batch_id = uuid::Uuid::new_v4().simple().to_string();
        let mut ids = Vec::with_capacity(manifest.len());
        for sref in manifest {
            ids.push(self.submit_in(sref.clone(), Some(batch_id.clone()))?.job_id);
        }
        let jobs = self.wait(&ids, None)?;
        Ok(BatchResult::new(batch_id, jobs))
    }

    pub fn review(&self, submission_id: &str, decision: ReviewDecision) -> Result<GradingRecord, ReviewFailure> {
        let (reply, rx) = crossbeam_channel::bounded(1);
        self.tx
            .send(Msg::Review { id: submission_id.into(), decision, reply })
            .map_err(|_| ReviewFailure::Stopped)?;
        rx.recv().map_err(|_| ReviewFailure::Stopped)?
    }

    /// Flagged records awaiting a decision, oldest first.
    pub fn review_queue(&self) -> Vec<GradingRecord> {
        let mut q: Vec<GradingRecord> = self.store.records().into_iter().filter(|r| r.awaiting_review()).collect();
        q.sort_by(|a, b| {
            (a.created_at, &a.submission.submission_id).cmp(&(b.created_at, &b.submission.submission_id))
        });
        q
    }

    /// The student report for a stored record, rendered from its current state.
    pub fn report(&self, submission_id: &str) -> Result<String, EngineError> {
        let record = self.store.load_record(submission_id)?;
        let chain = self.store.load_chain(submission_id).unwrap_or_else(|_| ChainOutcome::empty());
        let rubric = self
            .rubric(&record.submission.assignment_id)
            .ok_or_else(|| EngineError::UnknownAssignment(record.submission.assignment_id.clone()))?;
        Ok(render_student_report(&record, &chain, &rubric))
    }

    pub fn shutdown(&self) {
        let _ = self.tx.send(Msg::Shutdown);
        let threads = std::mem::take(&mut *self.threads.lock().expect("threads"));
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Starts an engine, grades a manifest and shuts down.
pub fn process_batch(manifest: &[SubmissionRef], rubric: &RubricSpec, cfg: EngineConfig) -> Result<BatchResult, EngineError> {
    let engine = Engine::start(cfg, vec![rubric.clone()])?;
    let result = engine.run_batch(manifest);
    engine.shutdown();
    result
}

fn worker(work: Receiver<WorkItem>, tx: Sender<Msg>, sandbox: &Sandbox, cfg: &EngineConfig) {
    while let Ok(item) = work.recv() {
        if tx.send(Msg::Started(item.job.job_id.clone())).is_err() {
            return;
        }
        let grader = Grader {
            rubric: &item.rubric,
            sandbox,
            backend: cfg.backend.as_ref(),
            retry: &cfg.retry,
            prompts: &cfg.prompts,
        };
        let result = match catch_unwind(AssertUnwindSafe(|| grader.grade(&item.job.submission, now()))) {
            Ok(Ok(out)) => Ok(Box::new(out)),
            Ok(Err(e)) => Err(e.to_string()),
            Err(panic) => Err(format!("grader panicked: {}", panic_message(&panic))),
        };
        if tx.send(Msg::Finished { job_id: item.job.job_id, result }).is_err() {
            return;
        }
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

struct Coordinator {
    book: JobBook,
    store: Arc<Store>,
    shared: Arc<Shared>,
    work_tx: Sender<WorkItem>,
}

impl Coordinator {
    fn run(mut self, rx: Receiver<Msg>) {
        for job in self.book.pending() {
            self.dispatch(job);
        }
        while let Ok(msg) = rx.recv() {
            match msg {
                Msg::Enqueue { sref, batch, reply } => {
                    let _ = reply.send(self.enqueue(sref, batch));
                }
                Msg::Started(id) => {
                    if self.book.get(&id).is_some_and(|j| j.state == JobState::Queued) {
                        self.advance(&id, JobState::Running, None);
                    }
                }
                Msg::Finished { job_id, result } => self.finish(&job_id, result),
                Msg::Review { id, decision, reply } => {
                    let _ = reply.send(self.review(&id, decision));
                }
                Msg::Shutdown => break,
            }
        }
    }

    fn enqueue(&mut self, sref: SubmissionRef, batch: Option<String>) -> Result<Job, EngineError> {
        if !crate::store::valid_id(&sref.submission_id) {
            return Err(EngineError::InvalidSubmissionId(sref.submission_id));
        }
        if !self.shared.rubrics.read().expect("rubrics").contains_key(&sref.assignment_id) {
            return Err(EngineError::UnknownAssignment(sref.assignment_id));
        }
        let job = self.book.enqueue(sref, batch, now())?;
        self.shared.publish(&job);
        self.dispatch(job.clone());
        Ok(job)
    }

    fn dispatch(&mut self, job: Job) {
        let rubric = self.shared.rubrics.read().expect("rubrics").get(&job.assignment_id).cloned();
        match rubric {
            Some(rubric) => {
                if self.work_tx.send(WorkItem { job: job.clone(), rubric }).is_err() {
                    self.advance(&job.job_id, JobState::FailedOperator, Some("worker pool unavailable".into()));
                }
            }
            None => {
                let detail = format!("no rubric loaded for assignment {:?}", job.assignment_id);
                self.advance(&job.job_id, JobState::FailedOperator, Some(detail));
            }
        }
    }

    fn advance(&mut self, id: &str, state: JobState, detail: Option<String>) {
        match self.book.advance(id, state, detail, now()) {
            Ok(job) => self.shared.publish(&job),
            Err(e) => log::error!("job {id}: {e}"),
        }
    }

    fn finish(&mut self, job_id: &str, result: Result<Box<GradeOutput>, String>) {
        let outcome = result.and_then(|out| self.persist(*out).map_err(|e| e.to_string()));
        match outcome {
            Ok(QaStatus::Completed) => self.advance(job_id, JobState::Completed, None),
            Ok(QaStatus::Flagged) => self.advance(job_id, JobState::Flagged, None),
            Err(detail) => {
                log::error!("job {job_id} failed: {detail}");
                self.advance(job_id, JobState::FailedOperator, Some(detail))
            }
        }
    }

    fn persist(&mut self, out: GradeOutput) -> Result<QaStatus, StoreError> {
        let id = out.record.submission.submission_id.clone();
        let mut record = out.record;
        // A resubmission starts a fresh review but keeps the earlier decisions.
        if let Ok(prev) = self.store.load_record(&id) {
            record.created_at = prev.created_at;
            record.review_history = prev.review_history;
        }
        if let Some(bytes) = &out.notebook {
            self.store.store_notebook(&id, bytes)?;
        }
        self.store.store_chain(&id, &out.chain)?;
        self.store.store_report(&id, &out.report)?;
        self.store.persist_record(&record)?;
        Ok(record.qa_status)
    }

    fn review(&mut self, id: &str, decision: ReviewDecision) -> Result<GradingRecord, ReviewFailure> {
        let updated = self.store.update(id, |r| apply_review(r, decision))??;
        let record = updated.record;
        if let Some(rubric) = self.shared.rubrics.read().expect("rubrics").get(&record.submission.assignment_id) {
            let chain = self.store.load_chain(id).unwrap_or_else(|_| ChainOutcome::empty());
            self.store.store_report(id, &render_student_report(&record, &chain, rubric))?;
        }
        Ok(record)
    }
}
