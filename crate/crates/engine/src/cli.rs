//! Command-line front end: batch grading, score comparison, review and the
//! HTTP service.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use autograde_core::report::render_cohort_summary;
use autograde_core::{GradingRecord, ReviewAction, ReviewDecision, RubricSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backend::{Backend, HttpBackend, MockBackend};
use crate::chain::RetryPolicy;
use crate::export::{compare_scores, read_scores, write_grades, CompareOptions};
use crate::ingest::{load_manifest, scan_directory};
use crate::orchestrator::{Engine, EngineConfig};
use crate::rubric_io::{load_rubric, load_rubric_file, ASSIGNMENT3_MOCK_YAML, ASSIGNMENT3_YAML};
use crate::sandbox::SandboxConfig;

pub type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Parser, Debug)]
#[command(name = "autograde", version, about = "Grade Jupyter notebook submissions against a rubric")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Grade a batch of submissions and write reports and a grade CSV.
    Grade(GradeArgs),
    /// Score-file statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Inspect and resolve flagged submissions.
    #[command(subcommand)]
    Review(ReviewCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "mock")]
    pub backend: BackendKind,
    /// Mock reply table (YAML). Defaults to the bundled Assignment 3 table.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Per-request timeout for the HTTP backend, in seconds.
    #[arg(long, default_value_t = 120.0)]
    pub request_timeout: f64,
}

#[derive(Args, Debug)]
pub struct GradeArgs {
    /// Rubric YAML. Defaults to the bundled Assignment 3 rubric.
    #[arg(long)]
    pub rubric: Option<PathBuf>,
    /// Manifest CSV with submission_id, student_id, path, assignment_id.
    #[arg(long, conflicts_with = "submissions")]
    pub manifest: Option<PathBuf>,
    /// Directory of notebooks, one submission per `.ipynb`.
    #[arg(long)]
    pub submissions: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
    /// Defaults to `$MMW_STORAGE`, then `<out>/storage`.
    #[arg(long, env = "MMW_STORAGE")]
    pub storage: Option<PathBuf>,
    #[arg(long, default_value = "python3")]
    pub python: String,
    /// Sandbox wall-clock limit per run, in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Subcommand, Debug)]
pub enum StatsCommand {
    /// Compare two score files.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub exclude_zeros: bool,
    /// Min-max align `b` onto [0, MAX] before comparing.
    #[arg(long, value_name = "MAX")]
    pub normalize_to_max: Option<f64>,
    /// Join column; by default the first of submission_id, student_id, id.
    #[arg(long)]
    pub key: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct StorageArgs {
    #[arg(long, env = "MMW_STORAGE")]
    pub storage: PathBuf,
    /// Extra rubric YAML used to re-render reports.
    #[arg(long)]
    pub rubric: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ReviewCommand {
    /// Flagged submissions awaiting review, oldest first.
    List {
        #[command(flatten)]
        storage: StorageArgs,
        #[arg(long)]
        json: bool,
    },
    /// Release the engine's score.
    Approve {
        id: String,
        #[command(flatten)]
        storage: StorageArgs,
        #[arg(long, default_value = "cli")]
        reviewer: String,
        #[arg(long, default_value = "")]
        note: String,
    },
    /// Replace the score with a reviewer's value.
    Override {
        id: String,
        #[command(flatten)]
        storage: StorageArgs,
        #[arg(long)]
        score: f64,
        #[arg(long)]
        note: String,
        #[arg(long, default_value = "cli")]
        reviewer: String,
    },
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = "MMW_STORAGE")]
    pub storage: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 4)]
    pub parallel: usize,
    #[arg(long, default_value = "python3")]
    pub python: String,
}

pub fn make_backend(args: &BackendArgs) -> CliResult<Arc<dyn Backend>> {
    Ok(match args.backend {
        BackendKind::Mock => {
            let text = match &args.fixtures {
                Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
                None => ASSIGNMENT3_MOCK_YAML.to_string(),
            };
            Arc::new(MockBackend::from_yaml(&text)?)
        }
        BackendKind::Http => Arc::new(HttpBackend::from_env(Duration::from_secs_f64(args.request_timeout))?),
    })
}

/// Rubrics from `<storage>/rubrics/*.yaml`, then `extra`, falling back to
/// the bundled one when neither supplies any.
pub fn load_rubrics(storage: &Path, extra: Option<&Path>) -> CliResult<Vec<RubricSpec>> {
    let mut out = Vec::new();
    let dir = storage.join("rubrics");
    if dir.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("yaml" | "yml")))
            .collect();
        paths.sort();
        for p in paths {
            out.push(load_rubric_file(&p).map_err(|e| format!("{}: {e}", p.display()))?);
        }
    }
    if let Some(p) = extra {
        out.push(load_rubric_file(p).map_err(|e| format!("{}: {e}", p.display()))?);
    }
    if out.is_empty() {
        out.push(load_rubric(ASSIGNMENT3_YAML)?);
    }
    Ok(out)
}

fn sandbox_config(python: &str, timeout: f64, storage: &Path) -> SandboxConfig {
    SandboxConfig {
        interpreter_command: python.split_whitespace().map(String::from).collect(),
        timeout_seconds: timeout,
        scratch_root: storage.join("scratch"),
        ..SandboxConfig::default()
    }
}

fn engine_config(backend: Arc<dyn Backend>, storage: &Path, parallelism: usize, sandbox: SandboxConfig) -> EngineConfig {
    EngineConfig {
        parallelism,
        sandbox,
        backend,
        storage_root: storage.to_path_buf(),
        retry: RetryPolicy::default(),
        prompts: Default::default(),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Grade(a) => grade(a, out),
        Command::Stats(StatsCommand::Compare(a)) => compare(a, out),
        Command::Review(r) => review(r, out),
        Command::Serve(s) => serve(s),
    }
}

fn grade(a: GradeArgs, out: &mut dyn Write) -> CliResult {
    let rubric = match &a.rubric {
        Some(p) => load_rubric_file(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => load_rubric(ASSIGNMENT3_YAML)?,
    };
    let manifest = match (&a.manifest, &a.submissions) {
        (Some(m), _) => {
            let text = std::fs::read_to_string(m).map_err(|e| format!("{}: {e}", m.display()))?;
            load_manifest(&text, m.parent())?
        }
        (None, Some(d)) => scan_directory(d, &rubric.assignment_id)?,
        (None, None) => return Err("one of --manifest or --submissions is required".into()),
    };
    let storage = a.storage.clone().unwrap_or_else(|| a.out.join("storage"));
    std::fs::create_dir_all(a.out.join("reports"))?;
    let backend = make_backend(&a.backend)?;
    let sandbox = sandbox_config(&a.python, a.timeout, &storage);
    let engine = Engine::start(engine_config(backend, &storage, a.parallel, sandbox), vec![rubric.clone()])?;
    let batch = engine.run_batch(&manifest)?;

    let mut records: Vec<GradingRecord> = Vec::new();
    for job in &batch.jobs {
        let id = &job.submission.submission_id;
        if let Ok(record) = engine.store().load_record(id) {
            std::fs::write(a.out.join("reports").join(format!("{id}.report.md")), engine.report(id)?)?;
            records.push(record);
        }
    }
    engine.shutdown();
    std::fs::write(a.out.join("grades.csv"), write_grades(&records))?;
    let mut summary = format!(
        "graded {} submission(s): {} completed, {} flagged, {} failed\n",
        batch.jobs.len(),
        batch.counts.completed,
        batch.counts.flagged,
        batch.counts.failed_operator
    );
    for job in batch.jobs.iter().filter(|j| j.error_detail.is_some()) {
        summary.push_str(&format!(
            "  {} {}: {}\n",
            job.submission.submission_id,
            job.state.as_str(),
            job.error_detail.as_deref().unwrap_or("")
        ));
    }
    if let Ok(cohort) = render_cohort_summary(&records, &rubric) {
        summary.push('\n');
        summary.push_str(&cohort.to_markdown());
    }
    std::fs::write(a.out.join("summary.md"), &summary)?;
    out.write_all(summary.as_bytes())?;
    Ok(())
}

fn compare(a: CompareArgs, out: &mut dyn Write) -> CliResult {
    let read = |p: &Path| -> CliResult<_> {
        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        let label = p.file_stem().and_then(|s| s.to_str()).unwrap_or("scores");
        Ok(read_scores(&text, label, a.key.as_deref()).map_err(|e| format!("{}: {e}", p.display()))?)
    };
    let (da, db) = (read(&a.a)?, read(&a.b)?);
    let c = compare_scores(
        &da,
        &db,
        CompareOptions { exclude_zeros: a.exclude_zeros, normalize_to_max: a.normalize_to_max, domain_max: None },
    );
    if a.json {
        serde_json::to_writer_pretty(&mut *out, &c)?;
        writeln!(out)?;
    } else {
        out.write_all(c.to_text().as_bytes())?;
    }
    Ok(())
}

/// Review commands go through a one-worker engine so record writes stay
/// single-writer. Any unfinished jobs in the journal resume as a side effect.
fn review_engine(s: &StorageArgs) -> CliResult<Engine> {
    let rubrics = load_rubrics(&s.storage, s.rubric.as_deref())?;
    let backend: Arc<dyn Backend> = Arc::new(MockBackend::from_yaml(ASSIGNMENT3_MOCK_YAML)?);
    let sandbox = sandbox_config("python3", 30.0, &s.storage);
    Ok(Engine::start(engine_config(backend, &s.storage, 1, sandbox), rubrics)?)
}

fn review(cmd: ReviewCommand, out: &mut dyn Write) -> CliResult {
    let (storage, id, decision) = match cmd {
        ReviewCommand::List { storage, json } => {
            let store = crate::store::Store::open(&storage.storage)?;
            let mut q: Vec<GradingRecord> = store.records().into_iter().filter(|r| r.awaiting_review()).collect();
            q.sort_by(|a, b| (a.created_at, &a.submission.submission_id).cmp(&(b.created_at, &b.submission.submission_id)));
            if json {
                let items: Vec<_> = q
                    .iter()
                    .map(|r| {
                        serde_json::json!({
                            "submission_id": r.submission.submission_id,
                            "flag_reasons": r.flag_reasons,
                            "internal_total": r.total_awarded,
                        })
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &items)?;
                writeln!(out)?;
            } else if q.is_empty() {
                writeln!(out, "no submissions awaiting review")?;
            } else {
                for r in &q {
                    writeln!(out, "{}\t{}\t{}", r.submission.submission_id, r.total_awarded, r.flag_reasons.join("; "))?;
                }
            }
            return Ok(());
        }
        ReviewCommand::Approve { id, storage, reviewer, note } => {
            let d = ReviewDecision { reviewer_id: reviewer, action: ReviewAction::ApproveComputed, override_score: None, note, decided_at: crate::now() };
            (storage, id, d)
        }
        ReviewCommand::Override { id, storage, score, note, reviewer } => {
            let d = ReviewDecision {
                reviewer_id: reviewer,
                action: ReviewAction::Override,
                override_score: Some(score),
                note,
                decided_at: crate::now(),
            };
            (storage, id, d)
        }
    };
    let engine = review_engine(&storage)?;
    let result = engine.review(&id, decision);
    engine.shutdown();
    let record = result?;
    writeln!(out, "{}: {:?}, released score {}", id, record.qa_status, record.exposed_score())?;
    Ok(())
}

fn serve(s: ServeArgs) -> CliResult {
    let rubrics = load_rubrics(&s.storage, None)?;
    let backend = make_backend(&s.backend)?;
    let sandbox = sandbox_config(&s.python, 30.0, &s.storage);
    let engine = Arc::new(Engine::start(engine_config(backend, &s.storage, s.parallel, sandbox), rubrics)?);
    let addr = SocketAddr::new(s.host, s.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(crate::api::serve(engine, addr))?;
    Ok(())
}
