//! Uniform access to chat-completion backends.
//!
//! Two backends sit behind one `complete` call: a deterministic scripted
//! mock that replays configured responses (no network), and a remote
//! OpenAI-compatible endpoint with exponential backoff. Every call is
//! appended to a call log so pipeline outputs stay reconstructible from
//! logs plus inputs.

mod distill;
mod mock;
pub mod prompts;

pub use distill::{export_distillation, DistillStats};
pub use mock::{ScenarioEntry, ScriptedMock};

use crate::config::{BackendConfig, BackendKind};
use crate::util::short_sha;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("network failure after {attempts} attempts: {message}")]
    Network { attempts: u32, message: String },
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("scripted scenario exhausted for stage {stage:?} matcher {matcher:?}")]
    MockExhausted { stage: String, matcher: String },
    #[error("no scenario entry matches stage {stage:?}")]
    UnmatchedRequest { stage: String },
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One rendered prompt headed for a backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    /// Versioned template reference, e.g. `detect_sentence@v1`.
    pub prompt_asset_id: String,
    pub rendered_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Free-form routing metadata: stage, patient_id, sentence_index.
    pub tags: BTreeMap<String, String>,
}

impl ChatRequest {
    pub fn new(asset_id: &str, rendered_prompt: String, temperature: f64) -> Self {
        assert!(!rendered_prompt.is_empty(), "rendered prompt must be non-empty");
        assert!(temperature >= 0.0, "temperature must be non-negative");
        ChatRequest {
            prompt_asset_id: asset_id.to_string(),
            rendered_prompt,
            temperature,
            max_tokens: 2048,
            tags: BTreeMap::new(),
        }
    }

    pub fn tag(mut self, key: &str, value: impl ToString) -> Self {
        self.tags.insert(key.to_string(), value.to_string());
        self
    }

    pub fn stage(&self) -> &str {
        self.tags.get("stage").map(String::as_str).unwrap_or("")
    }
}

/// Append-only record of one completed backend call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallLog {
    pub timestamp: String,
    pub request_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rendered_prompt: Option<String>,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt: u32,
    pub backend_id: String,
    pub tags: BTreeMap<String, String>,
}

/// Where call logs go: kept in memory for tests, JSONL on disk for runs.
#[derive(Clone)]
pub enum LogSink {
    Null,
    Memory(Arc<Mutex<Vec<CallLog>>>),
    File(Arc<Mutex<std::io::BufWriter<std::fs::File>>>),
}

impl LogSink {
    pub fn memory() -> Self {
        LogSink::Memory(Arc::new(Mutex::new(Vec::new())))
    }

    pub fn file(path: &Path) -> Result<Self, LlmError> {
        let file = std::fs::File::create(path)?;
        Ok(LogSink::File(Arc::new(Mutex::new(std::io::BufWriter::new(
            file,
        )))))
    }

    fn append(&self, entry: &CallLog) {
        match self {
            LogSink::Null => {}
            LogSink::Memory(buf) => buf.lock().unwrap().push(entry.clone()),
            LogSink::File(writer) => {
                let mut w = writer.lock().unwrap();
                let line = serde_json::to_string(entry).expect("call log serializes");
                let _ = writeln!(w, "{line}");
                let _ = w.flush();
            }
        }
    }

    /// Snapshot of a memory sink; empty for other sinks.
    pub fn entries(&self) -> Vec<CallLog> {
        match self {
            LogSink::Memory(buf) => buf.lock().unwrap().clone(),
            _ => Vec::new(),
        }
    }
}

/// Read a JSONL call log back from disk.
pub fn read_call_log(path: &Path) -> Result<Vec<CallLog>, LlmError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: CallLog = serde_json::from_str(line)
            .map_err(|e| LlmError::Config(format!("bad call log line: {e}")))?;
        out.push(entry);
    }
    Ok(out)
}

enum Backend {
    Mock(ScriptedMock),
    Remote(RemoteBackend),
}

/// Shared gateway handle; safe for concurrent calls.
pub struct LlmClient {
    backend: Backend,
    sink: LogSink,
    log_prompts: bool,
    limiter: Semaphore,
}

impl LlmClient {
    pub fn mock(scenario: ScriptedMock) -> Self {
        LlmClient {
            backend: Backend::Mock(scenario),
            sink: LogSink::memory(),
            log_prompts: true,
            limiter: Semaphore::new(usize::MAX),
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let backend = match cfg.kind {
            BackendKind::Mock => {
                let scenario = match &cfg.scenario_path {
                    Some(path) => ScriptedMock::load(Path::new(path))?,
                    None => ScriptedMock::empty(),
                };
                Backend::Mock(scenario)
            }
            BackendKind::Remote => Backend::Remote(RemoteBackend::new(cfg)?),
        };
        Ok(LlmClient {
            backend,
            sink: LogSink::memory(),
            log_prompts: cfg.log_prompts,
            limiter: Semaphore::new(cfg.max_concurrent_requests.max(1)),
        })
    }

    pub fn with_sink(mut self, sink: LogSink) -> Self {
        self.sink = sink;
        self
    }

    pub fn backend_id(&self) -> &'static str {
        match self.backend {
            Backend::Mock(_) => "mock",
            Backend::Remote(_) => "remote",
        }
    }

    pub fn logs(&self) -> Vec<CallLog> {
        self.sink.entries()
    }

    /// Complete a chat request: scripted playback in mock mode, HTTP with
    /// exponential backoff in remote mode. Every response is logged.
    pub fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let (response, attempt) = match &self.backend {
            Backend::Mock(mock) => (mock.respond(request)?, 1),
            Backend::Remote(remote) => remote.complete(request)?,
        };
        let entry = CallLog {
            timestamp: chrono::Utc::now().to_rfc3339(),
            request_digest: short_sha(&request.rendered_prompt),
            rendered_prompt: self.log_prompts.then(|| request.rendered_prompt.clone()),
            response_text: response.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            attempt,
            backend_id: self.backend_id().to_string(),
            tags: request.tags.clone(),
        };
        self.sink.append(&entry);
        Ok(response)
    }

    /// Panics if a scripted scenario still has unconsumed required responses.
    pub fn assert_scenario_consumed(&self) {
        if let Backend::Mock(mock) = &self.backend {
            mock.assert_fully_consumed();
        }
    }
}

struct RemoteBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    token: Option<String>,
    backoff_base_ms: u64,
    max_network_retries: u32,
}

impl RemoteBackend {
    fn new(cfg: &BackendConfig) -> Result<Self, LlmError> {
        let token = std::env::var(&cfg.token_env).ok();
        Ok(RemoteBackend {
            client: reqwest::blocking::Client::new(),
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model.clone(),
            token,
            backoff_base_ms: cfg.backoff_base_ms,
            max_network_retries: 3,
        })
    }

    fn complete(&self, request: &ChatRequest) -> Result<(String, u32), LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });

        let total_attempts = 1 + self.max_network_retries;
        let mut last_message = String::new();
        for attempt in 1..=total_attempts {
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: serde_json::Value = resp.json().map_err(|e| {
                            LlmError::Http {
                                status: status.as_u16(),
                                message: format!("bad response body: {e}"),
                            }
                        })?;
                        let content = value["choices"][0]["message"]["content"]
                            .as_str()
                            .ok_or_else(|| LlmError::Http {
                                status: status.as_u16(),
                                message: "missing choices[0].message.content".to_string(),
                            })?;
                        return Ok((content.to_string(), attempt));
                    }
                    if status.is_client_error() {
                        // client errors are not retryable
                        return Err(LlmError::Http {
                            status: status.as_u16(),
                            message: resp.text().unwrap_or_default(),
                        });
                    }
                    last_message = format!("HTTP {status}");
                }
                Err(e) => last_message = e.to_string(),
            }
            if attempt < total_attempts {
                let delay = self.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
        }
        Err(LlmError::Network {
            attempts: total_attempts,
            message: last_message,
        })
    }
}

/// Counting semaphore bounding outstanding remote requests.
struct Semaphore {
    state: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            state: Mutex::new(permits),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.state.lock().unwrap();
        while *available == 0 {
            available = self.cond.wait(available).unwrap();
        }
        *available -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.0.state.lock().unwrap();
        if *available != usize::MAX {
            *available += 1;
        }
        self.0.cond.notify_one();
    }
}
