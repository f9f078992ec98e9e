//! Isolated execution of student code.
//!
//! Every run gets a fresh scratch directory, its own process group and
//! session, address-space, CPU and file-size limits, a wall-clock timeout
//! enforced by killing the whole group, and (where the host allows it) a
//! private network namespace. Inside the interpreter an audit hook refuses
//! writes outside the scratch directory, process creation, sockets and
//! foreign-library loading.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::os::unix::fs::PermissionsExt;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use autograde_core::compare::{grade_observation, Expectation, Numeric, Observation};
use autograde_core::pyscan::find_function;
use autograde_core::rubric::ArtifactProbe;
use autograde_core::{CanonicalSubmission, ExecutionStatus, TestOutcome, TestResults, TestSuite};
use serde_json::{json, Value};
use wait_timeout::ChildExt;

const HARNESS: &str = include_str!("harness.py");
const OUTPUT_CAP: usize = 4 << 20;
const STDERR_EXCERPT: usize = 600;

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    Unavailable(String),
}

/// Counts concurrent runs; lets tests check the orchestrator's bound.
#[derive(Debug, Default)]
pub struct ConcurrencyGauge {
    current: AtomicUsize,
    peak: AtomicUsize,
    runs: AtomicUsize,
}

impl ConcurrencyGauge {
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn runs(&self) -> usize {
        self.runs.load(Ordering::SeqCst)
    }

    fn enter(&self) -> GaugeGuard<'_> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.runs.fetch_add(1, Ordering::SeqCst);
        GaugeGuard(self)
    }
}

struct GaugeGuard<'a>(&'a ConcurrencyGauge);

impl Drop for GaugeGuard<'_> {
    fn drop(&mut self) {
        self.0.current.fetch_sub(1, Ordering::SeqCst);
    }
}

#[derive(Clone, Debug)]
pub struct SandboxConfig {
    /// Interpreter and any leading arguments, e.g. `["python3"]`.
    pub interpreter_command: Vec<String>,
    pub timeout_seconds: f64,
    pub memory_limit_mb: u64,
    pub scratch_root: PathBuf,
    /// Try to detach each run from the network with a new namespace.
    pub isolate_network: bool,
    pub gauge: Arc<ConcurrencyGauge>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            interpreter_command: vec!["python3".into()],
            timeout_seconds: 30.0,
            memory_limit_mb: 512,
            scratch_root: std::env::temp_dir().join("autograde-scratch"),
            isolate_network: true,
            gauge: Arc::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntaxCheck {
    pub ok: bool,
    pub message: String,
    /// Line in the concatenated program.
    pub line: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Exit {
    Code(i32),
    Signal(i32),
    TimedOut,
}

struct RawRun {
    events: Vec<Value>,
    stderr: String,
    exit: Exit,
}

impl RawRun {
    fn event(&self, name: &str) -> Option<&Value> {
        self.events.iter().find(|e| e["event"] == name)
    }

    fn stderr_tail(&self) -> String {
        tail(&self.stderr, STDERR_EXCERPT)
    }

    fn abnormal_exit(&self) -> String {
        match self.exit {
            Exit::Code(c) => format!("interpreter exited with status {c} before finishing"),
            Exit::Signal(s) => format!("interpreter killed by signal {s}"),
            Exit::TimedOut => "timed out".into(),
        }
    }
}

fn tail(s: &str, n: usize) -> String {
    if s.len() <= n {
        return s.to_string();
    }
    let mut start = s.len() - n;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].to_string()
}

/// Files made available in the scratch directory, by file name.
pub type Attachments = [PathBuf];

#[derive(Clone, Debug)]
pub struct Sandbox {
    pub config: SandboxConfig,
}

/// Derived components computed from the student's program.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub values: BTreeMap<String, String>,
    pub failures: BTreeMap<String, String>,
    pub status: ExecutionStatus,
    pub detail: String,
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Sandbox { config }
    }

    /// Confirms the interpreter starts and the scratch root is writable.
    pub fn verify(&self) -> Result<(), SandboxError> {
        let check = self.check_syntax("x = 1")?;
        if check.ok {
            Ok(())
        } else {
            Err(SandboxError::Unavailable(format!("interpreter self-check failed: {}", check.message)))
        }
    }

    pub fn check_syntax(&self, code: &str) -> Result<SyntaxCheck, SandboxError> {
        let job = json!({"mode": "syntax", "program": code});
        let run = self.execute(job, self.timeout(None), self.config.memory_limit_mb, &[])?;
        match run.event("syntax") {
            Some(ev) => Ok(SyntaxCheck {
                ok: ev["ok"].as_bool().unwrap_or(false),
                message: ev["message"].as_str().unwrap_or_default().to_string(),
                line: ev["line"].as_u64().map(|l| l as usize),
            }),
            None if run.exit == Exit::Code(0) || run.exit == Exit::TimedOut => Ok(SyntaxCheck {
                ok: false,
                message: format!("syntax check did not complete: {}", run.abnormal_exit()),
                line: None,
            }),
            None => Err(SandboxError::Unavailable(format!(
                "interpreter failed during syntax check: {} {}",
                run.abnormal_exit(),
                run.stderr_tail()
            ))),
        }
    }

    /// Runs the program and then each test call in one isolated process.
    pub fn run_tests(
        &self,
        sub: &CanonicalSubmission,
        suite: &TestSuite,
        attachments: &Attachments,
    ) -> Result<TestResults, SandboxError> {
        let tests: Vec<Value> = suite
            .tests
            .iter()
            .map(|t| {
                let predicate = match &t.expected.expectation {
                    Expectation::Predicate(p) => Some(p.clone()),
                    _ => None,
                };
                json!({"id": t.test_id, "call": t.call_expression, "predicate": predicate})
            })
            .collect();
        let job = json!({
            "mode": "tests",
            "program": sub.program(),
            "setup_code": suite.setup_code,
            "tests": tests,
        });
        let memory = suite.memory_limit_mb.unwrap_or(self.config.memory_limit_mb);
        let run = self.execute(job, self.timeout(suite.timeout_seconds), memory, attachments)?;

        let mut notes = Vec::new();
        for f in &suite.required_functions {
            let m = find_function(sub, &f.name, f.arity);
            if !m.found {
                notes.push(format!("function {} is not defined", f.name));
            } else if !m.arity_matches {
                notes.push(format!("function {} does not take {} parameter(s)", f.name, f.arity));
            }
        }
        let (status, detail) = classify(&run);
        if !detail.is_empty() {
            notes.insert(0, detail);
        }
        let excerpt = run.stderr_tail();
        let outcomes = run
            .events
            .iter()
            .filter(|e| e["event"] == "test")
            .filter_map(|e| {
                let id = e["id"].as_str()?;
                let case = suite.tests.iter().find(|t| t.test_id == id)?;
                let (passed, observed) = grade_observation(&observation(e), &case.expected);
                Some(TestOutcome {
                    test_id: id.to_string(),
                    passed,
                    observed,
                    stderr_excerpt: if passed { String::new() } else { excerpt.clone() },
                })
            })
            .collect();
        Ok(TestResults::from_outcomes(suite, outcomes, status, notes.join("\n")))
    }

    /// Evaluates artifact expressions after running the program.
    pub fn probe_artifacts(
        &self,
        sub: &CanonicalSubmission,
        probes: &[ArtifactProbe],
        attachments: &Attachments,
    ) -> Result<ProbeReport, SandboxError> {
        let list: Vec<Value> = probes
            .iter()
            .map(|p| json!({"id": p.component_id, "expression": p.expression}))
            .collect();
        let job = json!({"mode": "probe", "program": sub.program(), "probes": list});
        let run = self.execute(job, self.timeout(None), self.config.memory_limit_mb, attachments)?;
        let (status, detail) = classify(&run);
        let mut report = ProbeReport {
            values: BTreeMap::new(),
            failures: BTreeMap::new(),
            status,
            detail,
        };
        for e in run.events.iter().filter(|e| e["event"] == "probe") {
            let Some(id) = e["id"].as_str() else { continue };
            match (e["text"].as_str(), e["error"].as_str()) {
                (Some(t), _) => {
                    report.values.insert(id.into(), t.into());
                }
                (None, err) => {
                    report.failures.insert(id.into(), err.unwrap_or("no value").into());
                }
            }
        }
        for p in probes {
            if !report.values.contains_key(&p.component_id) && !report.failures.contains_key(&p.component_id) {
                report.failures.insert(p.component_id.clone(), format!("not evaluated ({})", status.as_str()));
            }
        }
        Ok(report)
    }

    fn timeout(&self, suite: Option<f64>) -> Duration {
        Duration::from_secs_f64(suite.unwrap_or(self.config.timeout_seconds).max(0.001))
    }

    fn execute(&self, mut job: Value, timeout: Duration, memory_mb: u64, attachments: &Attachments) -> Result<RawRun, SandboxError> {
        let scratch = Scratch::create(&self.config.scratch_root)?;
        let nonce = uuid::Uuid::new_v4().simple().to_string();
        job["nonce"] = Value::String(nonce.clone());
        job["scratch"] = Value::String(scratch.path.to_string_lossy().into_owned());
        let unavailable = |what: &str, e: std::io::Error| SandboxError::Unavailable(format!("{what}: {e}"));
        fs::write(scratch.path.join("harness.py"), HARNESS).map_err(|e| unavailable("writing harness", e))?;
        fs::write(scratch.path.join("job.json"), job.to_string()).map_err(|e| unavailable("writing job", e))?;
        for a in attachments {
            if let Some(name) = a.file_name() {
                // A missing attachment shows up as a failing test, not an operator fault.
                let _ = fs::copy(a, scratch.path.join(name));
            }
        }

        let (program, lead) = self
            .config
            .interpreter_command
            .split_first()
            .ok_or_else(|| SandboxError::Unavailable("empty interpreter command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(lead)
            .args(["-s", "-B", "harness.py", "job.json"])
            .current_dir(&scratch.path)
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("HOME", &scratch.path)
            .env("TMPDIR", &scratch.path)
            .env("MPLCONFIGDIR", &scratch.path)
            .env("MPLBACKEND", "Agg")
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONNOUSERSITE", "1")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("OPENBLAS_NUM_THREADS", "1")
            .env("OMP_NUM_THREADS", "1")
            .env("MKL_NUM_THREADS", "1")
            .env("LANG", "C.UTF-8")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let limits = Limits {
            address_space: memory_mb.saturating_mul(1 << 20),
            cpu_seconds: timeout.as_secs() + 2,
            file_size: 64 << 20,
            isolate_network: self.config.isolate_network,
        };
        // SAFETY: the closure runs between fork and exec and only issues
        // async-signal-safe system calls.
        unsafe {
            cmd.pre_exec(move || limits.apply());
        }

        let _running = self.config.gauge.enter();
        let mut child = cmd
            .spawn()
            .map_err(|e| unavailable(&format!("cannot start interpreter {program:?}"), e))?;
        let started = Instant::now();
        let stdout = reader(child.stdout.take());
        let stderr = reader(child.stderr.take());
        let exit = wait(&mut child, timeout);
        log::debug!("sandbox run finished in {:?}: {:?}", started.elapsed(), exit);
        let stdout = stdout.join().unwrap_or_default();
        let stderr = String::from_utf8_lossy(&stderr.join().unwrap_or_default()).into_owned();

        let marker = format!("@@AG:{nonce}@@ ");
        let events = String::from_utf8_lossy(&stdout)
            .lines()
            .filter_map(|l| l.strip_prefix(&marker))
            .filter_map(|l| serde_json::from_str::<Value>(l).ok())
            .collect();
        Ok(RawRun { events, stderr, exit })
    }
}

fn classify(run: &RawRun) -> (ExecutionStatus, String) {
    if run.exit == Exit::TimedOut {
        return (ExecutionStatus::Timeout, "run exceeded its time limit".into());
    }
    if let Some(c) = run.event("crashed") {
        let err = c["error"].as_str().unwrap_or("unknown error");
        return (ExecutionStatus::Crashed, format!("submission raised {err}"));
    }
    if run.event("done").is_none() {
        return (ExecutionStatus::Crashed, run.abnormal_exit());
    }
    (ExecutionStatus::Completed, String::new())
}

fn decode_numeric(v: &Value) -> Option<Numeric> {
    match v {
        Value::Number(n) => n.as_f64().map(Numeric::Scalar),
        Value::String(s) => match s.as_str() {
            "nan" => Some(Numeric::Scalar(f64::NAN)),
            "inf" => Some(Numeric::Scalar(f64::INFINITY)),
            "-inf" => Some(Numeric::Scalar(f64::NEG_INFINITY)),
            _ => None,
        },
        Value::Array(items) => items.iter().map(decode_numeric).collect::<Option<Vec<_>>>().map(Numeric::Array),
        _ => None,
    }
}

fn observation(e: &Value) -> Observation {
    if let Some(err) = e["error"].as_str() {
        return Observation::Raised(err.into());
    }
    let text = e["text"].as_str().unwrap_or_default().to_string();
    if let Some(holds) = e["holds"].as_bool() {
        return Observation::Predicate { holds, text };
    }
    Observation::Value {
        numeric: decode_numeric(&e["numeric"]),
        text,
    }
}

fn reader<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let Some(mut pipe) = pipe else { return buf };
        let mut chunk = [0u8; 8192];
        loop {
            match pipe.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if buf.len() < OUTPUT_CAP {
                        let take = n.min(OUTPUT_CAP - buf.len());
                        buf.extend_from_slice(&chunk[..take]);
                    }
                }
            }
        }
        buf
    })
}

fn kill_group(child: &Child) {
    // The child called setsid, so its pid is also its process group id.
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
}

fn wait(child: &mut Child, timeout: Duration) -> Exit {
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) | Err(_) => {
            kill_group(child);
            let _ = child.kill();
            let _ = child.wait();
            return Exit::TimedOut;
        }
    };
    // Anything the run left behind in its group goes too.
    kill_group(child);
    match (status.code(), status.signal()) {
        (Some(c), _) => Exit::Code(c),
        (None, Some(s)) => Exit::Signal(s),
        (None, None) => Exit::Code(-1),
    }
}

#[derive(Clone, Copy)]
struct Limits {
    address_space: u64,
    cpu_seconds: u64,
    file_size: u64,
    isolate_network: bool,
}

impl Limits {
    fn apply(&self) -> std::io::Result<()> {
        unsafe {
            if libc::setsid() == -1 {
                return Err(std::io::Error::last_os_error());
            }
            let set = |res, soft: u64, hard: u64| {
                let lim = libc::rlimit {
                    rlim_cur: soft as libc::rlim_t,
                    rlim_max: hard as libc::rlim_t,
                };
                libc::setrlimit(res, &lim)
            };
            set(libc::RLIMIT_AS, self.address_space, self.address_space);
            set(libc::RLIMIT_CPU, self.cpu_seconds, self.cpu_seconds + 1);
            set(libc::RLIMIT_FSIZE, self.file_size, self.file_size);
            set(libc::RLIMIT_CORE, 0, 0);
            if self.isolate_network && libc::unshare(libc::CLONE_NEWNET) != 0 {
                libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
            }
        }
        Ok(())
    }
}

struct Scratch {
    path: PathBuf,
}

impl Scratch {
    fn create(root: &Path) -> Result<Self, SandboxError> {
        let err = |e: std::io::Error| SandboxError::Unavailable(format!("scratch directory under {}: {e}", root.display()));
        fs::create_dir_all(root).map_err(err)?;
        let path = root.join(format!("run-{}", uuid::Uuid::new_v4().simple()));
        fs::create_dir(&path).map_err(err)?;
        // A run that lands in a fresh user namespace acts as an unmapped user.
        fs::set_permissions(&path, fs::Permissions::from_mode(0o777)).map_err(err)?;
        let path = path.canonicalize().map_err(err)?;
        Ok(Scratch { path })
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.path);
    }
}
