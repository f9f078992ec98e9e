//! Text-generation backends: a fixture-driven mock and a generic HTTP client.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("backend response is malformed: {0}")]
    Malformed(String),
    #[error("no mock response matches the prompt")]
    NoFixture,
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

/// A completion service. Implementations must be callable from many
/// threads at once.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError>;

    /// Pause before a retry.
    fn retry_backoff(&self) -> Duration {
        Duration::ZERO
    }

    fn name(&self) -> &'static str;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Fail(BackendError),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReplyDoc {
    Text(String),
    Error { error: String },
}

/// Answers from an ordered table of prompt-substring keys; the first key
/// contained in the prompt wins.
#[derive(Debug, Default)]
pub struct MockBackend {
    table: Vec<(String, MockReply)>,
    calls: AtomicUsize,
    log: Mutex<Vec<String>>,
    record_prompts: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("invalid mock fixture: {0}")]
pub struct FixtureError(String);

impl MockBackend {
    pub fn new(table: Vec<(String, MockReply)>) -> Self {
        MockBackend { table, ..MockBackend::default() }
    }

    /// Loads a YAML mapping. Values are response strings or
    /// `{error: timeout | transport | <message>}`.
    pub fn from_yaml(text: &str) -> Result<Self, FixtureError> {
        let map: serde_yaml::Mapping = serde_yaml::from_str(text).map_err(|e| FixtureError(e.to_string()))?;
        let mut table = Vec::with_capacity(map.len());
        for (k, v) in map {
            let key = match k {
                serde_yaml::Value::String(s) => s,
                other => return Err(FixtureError(format!("key {other:?} is not a string"))),
            };
            if key.is_empty() {
                return Err(FixtureError("empty key".into()));
            }
            let reply = match serde_yaml::from_value::<ReplyDoc>(v).map_err(|e| FixtureError(format!("{key}: {e}")))? {
                ReplyDoc::Text(t) => MockReply::Text(t),
                ReplyDoc::Error { error } => MockReply::Fail(match error.as_str() {
                    "timeout" => BackendError::Timeout,
                    other => BackendError::Transport(other.into()),
                }),
            };
            table.push((key, reply));
        }
        Ok(MockBackend::new(table))
    }

    /// Keeps every prompt for later inspection.
    pub fn recording(mut self) -> Self {
        self.record_prompts = true;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.log.lock().expect("mock log").clone()
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &str, _max_tokens: u32) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.record_prompts {
            self.log.lock().expect("mock log").push(prompt.to_string());
        }
        match self.table.iter().find(|(k, _)| prompt.contains(k.as_str())) {
            Some((_, MockReply::Text(t))) => Ok(t.clone()),
            Some((_, MockReply::Fail(e))) => Err(e.clone()),
            None => Err(BackendError::NoFixture),
        }
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

/// POSTs `{prompt, max_tokens}` and reads `{text}`.
pub struct HttpBackend {
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
    backoff: Duration,
}

#[derive(Deserialize)]
struct HttpReply {
    text: String,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, request_timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            endpoint: endpoint.into(),
            token,
            agent,
            backoff: Duration::from_secs(2),
        }
    }

    /// Reads `LLM_ENDPOINT` and the optional `LLM_TOKEN`.
    pub fn from_env(request_timeout: Duration) -> Result<Self, BackendError> {
        let endpoint = std::env::var("LLM_ENDPOINT")
            .map_err(|_| BackendError::Transport("LLM_ENDPOINT is not set".into()))?;
        let token = std::env::var("LLM_TOKEN").ok().filter(|t| !t.is_empty());
        Ok(HttpBackend::new(endpoint, token, request_timeout))
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &str, max_tokens: u32) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let body = serde_json::json!({"prompt": prompt, "max_tokens": max_tokens});
        let mut resp = req.send_json(&body).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport)?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(500);
            return Err(BackendError::Status { status, body });
        }
        serde_json::from_str::<HttpReply>(&text)
            .map(|r| r.text)
            .map_err(|e| BackendError::Malformed(e.to_string()))
    }

    fn retry_backoff(&self) -> Duration {
        self.backoff
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

fn transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        other => BackendError::Transport(other.to_string()),
    }
}
