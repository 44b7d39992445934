//! Uniform chat-completion interface over any LLM backend, with
//! deterministic record/replay cassettes and per-run token accounting.
//!
//! A [`Gateway`] wraps a [`ChatBackend`] and a cassette. In `record` mode
//! every response is appended to the cassette keyed by a fingerprint of the
//! normalized request; in `replay_strict` mode the cassette is the only
//! source and no network I/O ever happens. Prompt templates are owned by
//! callers; this module only moves messages.

mod http;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::TokenUsage;

pub use http::{decode_tool_call_content, encode_tool_call_content, HttpBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cassette miss for fingerprint {fingerprint} (replay_strict)")]
    CassetteMiss { fingerprint: String },
    #[error("backend error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Backend { status: Option<u16>, message: String },
    #[error("no backend configured for mode {0:?}")]
    NoBackend(GatewayMode),
    #[error("cassette io: {0}")]
    CassetteIo(#[from] std::io::Error),
    #[error("malformed cassette line {line}: {message}")]
    MalformedCassette { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    /// Set on `tool` messages to link the result to the call it answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into(), tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into(), tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into(), tool_call_id: None }
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Message {
            role: Role::Tool,
            content: content.into(),
            tool_call_id: Some(call_id.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    /// JSON-schema-like parameter tree.
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Arguments as JSON text.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_declarations: Option<Vec<ToolSchema>>,
    /// Always 0; kept explicit so recorded requests are self-describing.
    pub temperature: f64,
    pub max_output: u32,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        ChatRequest { messages, tool_declarations: None, temperature: 0.0, max_output: 8192 }
    }

    pub fn with_tools(mut self, tools: Vec<ToolSchema>) -> Self {
        self.tool_declarations = Some(tools);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("empty message list".into()))?;
        if !matches!(first.role, Role::System | Role::User) {
            return Err(GatewayError::InvalidRequest(
                "first message must be system or user".into(),
            ));
        }
        if self.temperature != 0.0 {
            return Err(GatewayError::InvalidRequest("temperature is fixed at 0".into()));
        }
        if let Some(tools) = &self.tool_declarations {
            let mut names: Vec<&str> = tools.iter().map(|t| t.name.as_str()).collect();
            names.sort_unstable();
            names.dedup();
            if names.len() != tools.len() {
                return Err(GatewayError::InvalidRequest("duplicate tool names".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseKind {
    Text { content: String },
    ToolCalls { calls: Vec<ToolCall> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    #[serde(flatten)]
    pub kind: ResponseKind,
    pub usage: TokenUsage,
}

impl ChatResponse {
    pub fn text(content: impl Into<String>, usage: TokenUsage) -> Self {
        ChatResponse { kind: ResponseKind::Text { content: content.into() }, usage }
    }

    pub fn tool_calls(calls: Vec<ToolCall>, usage: TokenUsage) -> Self {
        ChatResponse { kind: ResponseKind::ToolCalls { calls }, usage }
    }

    pub fn as_text(&self) -> Option<&str> {
        match &self.kind {
            ResponseKind::Text { content } => Some(content),
            ResponseKind::ToolCalls { .. } => None,
        }
    }
}

/// Stable hash of the normalized request: message roles and contents
/// (trailing whitespace stripped), tool names (sorted), and temperature.
/// `max_output` and tool parameter schemas are deliberately excluded.
pub fn fingerprint(request: &ChatRequest) -> String {
    let mut hasher = Sha256::new();
    let mut feed = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    feed(b"v1");
    for message in &request.messages {
        feed(match message.role {
            Role::System => b"system",
            Role::User => b"user",
            Role::Assistant => b"assistant",
            Role::Tool => b"tool",
        });
        feed(message.content.trim_end().as_bytes());
        feed(message.tool_call_id.as_deref().unwrap_or("").as_bytes());
    }
    let mut tool_names: Vec<&str> = request
        .tool_declarations
        .iter()
        .flatten()
        .map(|t| t.name.as_str())
        .collect();
    tool_names.sort_unstable();
    for name in tool_names {
        feed(name.as_bytes());
    }
    feed(format!("{:.1}", request.temperature).as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

fn request_digest(request: &ChatRequest) -> String {
    let last = request
        .messages
        .iter()
        .rev()
        .find(|m| !matches!(m.role, Role::System))
        .or(request.messages.last());
    let head: String = last
        .map(|m| m.content.chars().take(96).collect::<String>().replace('\n', " "))
        .unwrap_or_default();
    format!("{} msgs; last: {}", request.messages.len(), head)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Live,
    Record,
    ReplayStrict,
}

impl GatewayMode {
    pub fn parse(name: &str) -> Option<GatewayMode> {
        match name.trim().to_ascii_lowercase().as_str() {
            "live" => Some(GatewayMode::Live),
            "record" => Some(GatewayMode::Record),
            "replay" | "replay_strict" => Some(GatewayMode::ReplayStrict),
            _ => None,
        }
    }
}

/// A backend failure. `transient` failures (timeouts, 429, 5xx) are retried.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct BackendError {
    pub status: Option<u16>,
    pub message: String,
    pub transient: bool,
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        BackendError { status: None, message: message.into(), transient: true }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        BackendError { status: None, message: message.into(), transient: false }
    }
}

/// Anything that can answer a chat request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

#[derive(Serialize, Deserialize)]
struct CassetteEntry {
    fingerprint: String,
    request_digest: String,
    response: ChatResponse,
}

struct CassetteState {
    path: Option<PathBuf>,
    entries: HashMap<String, ChatResponse>,
}

impl CassetteState {
    fn load(path: &Path) -> Result<HashMap<String, ChatResponse>, GatewayError> {
        let mut entries = HashMap::new();
        if !path.exists() {
            return Ok(entries);
        }
        let file = File::open(path)?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| GatewayError::MalformedCassette {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entries.insert(entry.fingerprint, entry.response);
        }
        Ok(entries)
    }

    fn append(&mut self, entry: CassetteEntry) -> Result<(), GatewayError> {
        if let Some(path) = &self.path {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(&entry).expect("cassette entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        self.entries.insert(entry.fingerprint, entry.response);
        Ok(())
    }
}

/// Shareable, internally synchronized LLM front end. One gateway accounts
/// for one run's token usage.
pub struct Gateway {
    mode: GatewayMode,
    backend: Option<Box<dyn ChatBackend>>,
    cassette: Mutex<CassetteState>,
    usage: Mutex<TokenUsage>,
    retry_backoff: Duration,
}

impl Gateway {
    pub fn live(backend: Box<dyn ChatBackend>) -> Self {
        Gateway {
            mode: GatewayMode::Live,
            backend: Some(backend),
            cassette: Mutex::new(CassetteState { path: None, entries: HashMap::new() }),
            usage: Mutex::new(TokenUsage::ZERO),
            retry_backoff: Duration::from_millis(250),
        }
    }

    pub fn record(backend: Box<dyn ChatBackend>, cassette: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = cassette.into();
        let entries = CassetteState::load(&path)?;
        Ok(Gateway {
            mode: GatewayMode::Record,
            backend: Some(backend),
            cassette: Mutex::new(CassetteState { path: Some(path), entries }),
            usage: Mutex::new(TokenUsage::ZERO),
            retry_backoff: Duration::from_millis(250),
        })
    }

    pub fn replay(cassette: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = cassette.into();
        let entries = CassetteState::load(&path)?;
        Ok(Gateway {
            mode: GatewayMode::ReplayStrict,
            backend: None,
            cassette: Mutex::new(CassetteState { path: Some(path), entries }),
            usage: Mutex::new(TokenUsage::ZERO),
            retry_backoff: Duration::from_millis(250),
        })
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    #[cfg(test)]
    pub(crate) fn set_retry_backoff(&mut self, backoff: Duration) {
        self.retry_backoff = backoff;
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let fp = fingerprint(request);
        let response = match self.mode {
            GatewayMode::ReplayStrict => {
                let cassette = self.cassette.lock().expect("cassette lock");
                cassette
                    .entries
                    .get(&fp)
                    .cloned()
                    .ok_or(GatewayError::CassetteMiss { fingerprint: fp })?
            }
            GatewayMode::Record => {
                let recorded =
                    self.cassette.lock().expect("cassette lock").entries.get(&fp).cloned();
                match recorded {
                    Some(response) => response,
                    None => {
                        let response = self.call_backend(request)?;
                        self.cassette.lock().expect("cassette lock").append(CassetteEntry {
                            fingerprint: fp,
                            request_digest: request_digest(request),
                            response: response.clone(),
                        })?;
                        response
                    }
                }
            }
            GatewayMode::Live => self.call_backend(request)?,
        };
        *self.usage.lock().expect("usage lock") += response.usage;
        Ok(response)
    }

    /// Cumulative token usage for this run; monotone nondecreasing.
    pub fn run_usage(&self) -> TokenUsage {
        *self.usage.lock().expect("usage lock")
    }

    fn call_backend(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend(self.mode))?;
        let mut last_err: Option<BackendError> = None;
        for attempt in 0..3u32 {
            if attempt > 0 {
                std::thread::sleep(self.retry_backoff * 2u32.pow(attempt - 1));
            }
            match backend.complete(request) {
                Ok(response) => return Ok(response),
                Err(err) if err.transient => last_err = Some(err),
                Err(err) => {
                    return Err(GatewayError::Backend { status: err.status, message: err.message })
                }
            }
        }
        let err = last_err.expect("at least one attempt ran");
        Err(GatewayError::Backend { status: err.status, message: err.message })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct CountingBackend {
        calls: AtomicU32,
        fail_first: u32,
    }

    impl ChatBackend for CountingBackend {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(BackendError::transient("simulated outage"));
            }
            let input = request.messages.iter().map(|m| m.content.len() as u64).sum();
            Ok(ChatResponse::text("ok", TokenUsage::new(input, 2)))
        }
    }

    fn request(content: &str) -> ChatRequest {
        ChatRequest::new(vec![Message::user(content)])
    }

    #[test]
    fn fingerprint_ignores_trailing_whitespace_and_max_output() {
        let a = request("hello");
        let mut b = request("hello  \n");
        b.max_output = 17;
        assert_eq!(fingerprint(&a), fingerprint(&b));
        let c = request("hello there");
        assert_ne!(fingerprint(&a), fingerprint(&c));
    }

    #[test]
    fn fingerprint_ignores_tool_schema_bodies_and_order() {
        let schema_a = ToolSchema {
            name: "write_file".into(),
            description: "writes".into(),
            parameters: serde_json::json!({"a": 1, "b": 2}),
        };
        let schema_b = ToolSchema {
            name: "bash".into(),
            description: "runs".into(),
            parameters: serde_json::json!({"b": 2, "a": 1}),
        };
        let one = request("x").with_tools(vec![schema_a.clone(), schema_b.clone()]);
        let mut swapped_schema = schema_b.clone();
        swapped_schema.parameters = serde_json::json!({"a": 1, "b": 2});
        swapped_schema.description = "different text".into();
        let two = request("x").with_tools(vec![swapped_schema, schema_a]);
        assert_eq!(fingerprint(&one), fingerprint(&two));
    }

    #[test]
    fn record_then_replay_round_trips_without_backend_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cassette.jsonl");

        let backend = CountingBackend { calls: AtomicU32::new(0), fail_first: 0 };
        let recorder = Gateway::record(Box::new(backend), &path).unwrap();
        let first = recorder.complete(&request("hello")).unwrap();
        // Same request again: served from the cassette, not the backend.
        let second = recorder.complete(&request("hello")).unwrap();
        assert_eq!(first, second);

        let replayer = Gateway::replay(&path).unwrap();
        let replayed = replayer.complete(&request("hello")).unwrap();
        assert_eq!(replayed, first);
        assert_eq!(replayer.run_usage(), first.usage);

        let miss = replayer.complete(&request("unseen")).unwrap_err();
        match miss {
            GatewayError::CassetteMiss { fingerprint: fp } => {
                assert_eq!(fp, fingerprint(&request("unseen")));
            }
            other => panic!("expected CassetteMiss, got {other}"),
        }
    }

    #[test]
    fn usage_accumulates_componentwise_and_monotonically() {
        let backend = CountingBackend { calls: AtomicU32::new(0), fail_first: 0 };
        let gateway = Gateway::live(Box::new(backend));
        assert_eq!(gateway.run_usage(), TokenUsage::ZERO);
        gateway.complete(&request("0123456789")).unwrap();
        let after_one = gateway.run_usage();
        assert_eq!(after_one, TokenUsage::new(10, 2));
        gateway.complete(&request("01234")).unwrap();
        let after_two = gateway.run_usage();
        assert!(after_two.input_tokens >= after_one.input_tokens);
        assert_eq!(after_two, TokenUsage::new(15, 4));
    }

    #[test]
    fn transient_errors_retry_then_surface() {
        let backend = CountingBackend { calls: AtomicU32::new(0), fail_first: 2 };
        let mut gateway = Gateway::live(Box::new(backend));
        gateway.set_retry_backoff(Duration::from_millis(1));
        assert!(gateway.complete(&request("x")).is_ok());

        let backend = CountingBackend { calls: AtomicU32::new(0), fail_first: 99 };
        let mut gateway = Gateway::live(Box::new(backend));
        gateway.set_retry_backoff(Duration::from_millis(1));
        let err = gateway.complete(&request("x")).unwrap_err();
        assert!(matches!(err, GatewayError::Backend { .. }));
    }

    #[test]
    fn first_message_must_be_system_or_user() {
        let req = ChatRequest::new(vec![Message::assistant("hi")]);
        assert!(req.validate().is_err());
    }
}
