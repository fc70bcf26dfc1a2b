//! Chat backends: a live HTTP client speaking the common chat-completions
//! wire shape, and a transcript-replay backend that makes whole trials
//! deterministic and offline-reproducible.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable holding the API key for the live backend.
pub const API_KEY_ENV: &str = "TMLAB_API_KEY";

/// Default sampling temperature for idea-generation prompts.
pub const IDEA_TEMPERATURE: f64 = 0.7;
/// Default sampling temperature for code-generation prompts.
pub const CODE_TEMPERATURE: f64 = 0.2;

// ---------------------------------------------------------------------------
// Requests and responses
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// One chat-completions request. Serializes directly to the wire body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Protocol("chat request has no messages".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    /// Token accounting when the backend reports it (the replay backend
    /// does not).
    pub usage: Option<TokenUsage>,
    pub latency: Duration,
}

// ---------------------------------------------------------------------------
// Backend trait
// ---------------------------------------------------------------------------

/// A chat backend handles one in-flight request at a time.
pub trait ChatBackend {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse>;

    /// Short human-readable backend description for logs.
    fn describe(&self) -> String;
}

// ---------------------------------------------------------------------------
// Replay backend
// ---------------------------------------------------------------------------

/// Returns pre-scripted responses in order, ignoring request content.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    responses: Vec<String>,
    cursor: usize,
}

/// One line of a replay transcript file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TranscriptLine {
    response: String,
}

impl ReplayBackend {
    pub fn from_responses(responses: Vec<String>) -> ReplayBackend {
        ReplayBackend { responses, cursor: 0 }
    }

    /// Load a JSONL transcript: one `{"response": "..."}` object per line.
    pub fn from_path(path: &Path) -> Result<ReplayBackend> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut responses = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TranscriptLine = serde_json::from_str(line).map_err(|e| Error::Schema {
                path: path.into(),
                message: format!("transcript line {}: {e}", i + 1),
            })?;
            responses.push(parsed.response);
        }
        Ok(ReplayBackend::from_responses(responses))
    }

    /// Write responses out as a JSONL transcript.
    pub fn write_transcript(path: &Path, responses: &[String]) -> Result<()> {
        let mut out = String::new();
        for response in responses {
            let line = serde_json::to_string(&TranscriptLine { response: response.clone() })
                .map_err(|e| Error::Schema { path: path.into(), message: e.to_string() })?;
            out.push_str(&line);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.cursor
    }
}

impl ChatBackend for ReplayBackend {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let Some(content) = self.responses.get(self.cursor) else {
            return Err(Error::ReplayExhausted { consumed: self.cursor });
        };
        self.cursor += 1;
        Ok(ChatResponse { content: content.clone(), usage: None, latency: Duration::ZERO })
    }

    fn describe(&self) -> String {
        format!("replay ({} responses)", self.responses.len())
    }
}

// ---------------------------------------------------------------------------
// Live HTTP backend
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

/// Live chat-completions client. POSTs the request body as JSON and reads
/// the first choice's message content.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

    /// Build a client for `endpoint`. The API key is taken from the
    /// `TMLAB_API_KEY` environment variable when present; requests are sent
    /// unauthenticated otherwise.
    pub fn new(endpoint: impl Into<String>) -> Result<HttpBackend> {
        Self::with_api_key(endpoint, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_api_key(endpoint: impl Into<String>, api_key: Option<String>) -> Result<HttpBackend> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Self::DEFAULT_TIMEOUT)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpBackend { endpoint: endpoint.into(), api_key, client })
    }
}

impl ChatBackend for HttpBackend {
    fn chat(&mut self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let started = Instant::now();
        let mut http = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| Error::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Error::HttpStatus { status, body });
        }
        let wire: WireResponse = serde_json::from_str(&body)
            .map_err(|e| Error::Protocol(format!("malformed response body: {e}")))?;
        let Some(choice) = wire.choices.into_iter().next() else {
            return Err(Error::Protocol("response contains no choices".into()));
        };
        Ok(ChatResponse {
            content: choice.message.content,
            usage: wire.usage,
            latency: started.elapsed(),
        })
    }

    fn describe(&self) -> String {
        format!("live ({})", self.endpoint)
    }
}

// ---------------------------------------------------------------------------
// Retry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay_ms: 1000, factor: 2.0 }
    }
}

impl RetryPolicy {
    fn delay_before_attempt(&self, attempt: u32) -> Duration {
        // attempt is 1-based; the delay precedes attempts 2..=max.
        let exponent = attempt.saturating_sub(2) as i32;
        Duration::from_millis((self.base_delay_ms as f64 * self.factor.powi(exponent)) as u64)
    }
}

/// Issue a request, retrying transient failures (transport errors, HTTP 429
/// and 5xx) with exponential backoff. Non-retryable errors surface
/// immediately; exhausting all attempts reports the attempt count and the
/// last error.
pub fn with_retry(
    backend: &mut dyn ChatBackend,
    request: &ChatRequest,
    policy: &RetryPolicy,
) -> Result<ChatResponse> {
    request.validate()?;
    let attempts = policy.max_attempts.max(1);
    let mut last: Option<Error> = None;
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(policy.delay_before_attempt(attempt));
        }
        match backend.chat(request) {
            Ok(response) => return Ok(response),
            Err(e) if e.is_retryable() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetriesExhausted { attempts, last: Box::new(last.unwrap()) })
}
