use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Backend, BackendOutcome, GatewayError, GenerationRequest};

pub const ENV_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_EMBED_MODEL: &str = "EMBED_MODEL_ID";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, initial_backoff: Duration::from_millis(500), multiplier: 2 }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` counts from 1.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * self.multiplier.saturating_pow(attempt.saturating_sub(1))
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads `LLM_BASE_URL` and `LLM_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_BASE_URL).ok().filter(|s| !s.trim().is_empty())?;
        let mut cfg = Self::new(base);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }
}

/// OpenAI-compatible chat-completions and embeddings client.
#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

enum Failure {
    Retryable(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::BackendUnavailable(format!("http client: {e}")))?;
        Ok(Self { config, client })
    }

    pub fn endpoint(&self, path: &str) -> String {
        endpoint(&self.config.base_url, path)
    }

    fn post_with_retry(&self, path: &str, body: &Value) -> BackendOutcome<Value> {
        let url = self.endpoint(path);
        let policy = self.config.retry;
        let max = policy.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            match self.post_once(&url, body) {
                Ok(v) => return BackendOutcome { result: Ok(v), attempts: attempt },
                Err(Failure::Fatal(e)) => return BackendOutcome { result: Err(e), attempts: attempt },
                Err(Failure::Retryable(detail)) => {
                    log::warn!("{url}: attempt {attempt}/{max} failed: {detail}");
                    last = detail;
                    if attempt < max {
                        thread::sleep(policy.backoff(attempt));
                    }
                }
            }
        }
        BackendOutcome {
            result: Err(GatewayError::BackendUnavailable(format!("{max} attempts to {url}: {last}"))),
            attempts: max,
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("status {}: {}", status.as_u16(), text)));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(GatewayError::BackendError { status: status.as_u16(), body: text }));
        }
        serde_json::from_str(&text).map_err(|e| {
            Failure::Fatal(GatewayError::BackendError {
                status: status.as_u16(),
                body: format!("unparseable response ({e}): {text}"),
            })
        })
    }
}

fn endpoint(base_url: &str, path: &str) -> String {
    format!("{}/{}", base_url.trim_end_matches('/'), path.trim_start_matches('/'))
}

pub(crate) fn chat_body(request: &GenerationRequest) -> Value {
    let mut messages = Vec::with_capacity(2);
    if !request.system_prompt.is_empty() {
        messages.push(json!({"role": "system", "content": request.system_prompt}));
    }
    messages.push(json!({"role": "user", "content": request.user_prompt}));
    let mut body = json!({
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

pub(crate) fn parse_chat(v: Value) -> Result<String, GatewayError> {
    let parsed: ChatResponse = serde_json::from_value(v.clone()).map_err(|e| {
        GatewayError::BackendError { status: 200, body: format!("bad chat response ({e}): {v}") }
    })?;
    let choice = parsed.choices.into_iter().next().ok_or_else(|| GatewayError::BackendError {
        status: 200,
        body: "chat response has no choices".into(),
    })?;
    Ok(choice.message.content.unwrap_or_default())
}

pub(crate) fn parse_embedding(v: Value) -> Result<Vec<f64>, GatewayError> {
    let parsed: EmbeddingResponse = serde_json::from_value(v.clone()).map_err(|e| {
        GatewayError::BackendError { status: 200, body: format!("bad embedding response ({e}): {v}") }
    })?;
    parsed
        .data
        .into_iter()
        .next()
        .map(|d| d.embedding)
        .ok_or_else(|| GatewayError::EmbedderFailure("embedding response has no data".into()))
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.base_url.trim_end_matches('/'))
    }

    fn generate(&self, request: &GenerationRequest) -> BackendOutcome<String> {
        let out = self.post_with_retry("v1/chat/completions", &chat_body(request));
        BackendOutcome { result: out.result.and_then(parse_chat), attempts: out.attempts }
    }

    fn embed(&self, text: &str, model_id: &str) -> BackendOutcome<Vec<f64>> {
        let body = json!({"model": model_id, "input": text});
        let out = self.post_with_retry("v1/embeddings", &body);
        BackendOutcome { result: out.result.and_then(parse_embedding), attempts: out.attempts }
    }
}
