//! Text generation and embedding behind one interface, with per-call latency
//! capture.
//!
//! A [`Gateway`] wraps a [`Backend`] (an OpenAI-compatible HTTP endpoint or a
//! scripted mock) and appends one [`CallRecord`] per call to an append-only
//! log. Records carry a monotonic sequence number assigned at completion.

mod http;
mod mock;

use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge_base::{normalize, EmbedError, Embedder};

pub use http::{HttpBackend, HttpConfig, RetryPolicy, ENV_API_KEY, ENV_BASE_URL, ENV_EMBED_MODEL};
pub use mock::{MockBackend, MockScript, DEFAULT_KEY};

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const MAX_TEMPERATURE: f64 = 2.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend error (status {status}): {body}")]
    BackendError { status: u16, body: String },
    #[error("mock script has no response for `{0}`")]
    ScriptExhausted(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("embedder failure: {0}")]
    EmbedderFailure(String),
}

/// Who is calling, used for mock-script lookup and the call log.
///
/// `round` is 0 for preparation-phase calls; `run` is the replicate index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallTag {
    pub role: String,
    pub agent_id: String,
    pub round: u32,
    #[serde(default)]
    pub run: u32,
}

impl CallTag {
    pub fn new(role: impl Into<String>, agent_id: impl Into<String>, round: u32) -> Self {
        Self { role: role.into(), agent_id: agent_id.into(), round, run: 0 }
    }

    pub fn with_run(mut self, run: u32) -> Self {
        self.run = run;
        self
    }

    /// `role:agent_id:round`, the mock-script key.
    pub fn script_key(&self) -> String {
        format!("{}:{}:{}", self.role, self.agent_id, self.round)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub tag: CallTag,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("user_prompt is empty".into()));
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, {MAX_TEMPERATURE}]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub latency_ms: f64,
    pub backend_id: String,
}

/// What a backend returns: the result plus how many attempts it took.
#[derive(Debug)]
pub struct BackendOutcome<T> {
    pub result: Result<T, GatewayError>,
    pub attempts: u32,
}

impl<T> BackendOutcome<T> {
    pub fn once(result: Result<T, GatewayError>) -> Self {
        Self { result, attempts: 1 }
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> BackendOutcome<String>;
    /// Raw embedding; the gateway checks finiteness and normalises.
    fn embed(&self, text: &str, model_id: &str) -> BackendOutcome<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Generate,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub kind: CallKind,
    pub role: String,
    pub agent_id: String,
    pub round: u32,
    pub latency_ms: f64,
    pub prompt_chars: usize,
    pub response_chars: usize,
    pub attempts: u32,
    pub ok: bool,
    /// Set when the backend returned an empty completion.
    #[serde(default)]
    pub empty_response: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    log: Mutex<Vec<CallRecord>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend.id()).finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self { backend, log: Mutex::new(Vec::new()) }
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, GatewayError> {
        let prompt_chars = request.system_prompt.chars().count() + request.user_prompt.chars().count();
        let start = Instant::now();
        let outcome = match request.validate() {
            Ok(()) => self.backend.generate(request),
            Err(e) => BackendOutcome { result: Err(e), attempts: 0 },
        };
        let latency_ms = start.elapsed().as_secs_f64() * 1000.0;

        let (response_chars, empty, error) = match &outcome.result {
            Ok(text) => (text.chars().count(), text.is_empty(), None),
            Err(e) => (0, false, Some(e.to_string())),
        };
        if empty {
            log::warn!("backend returned an empty completion for {}", request.tag.script_key());
        }
        self.record(CallRecord {
            seq: 0,
            kind: CallKind::Generate,
            role: request.tag.role.clone(),
            agent_id: request.tag.agent_id.clone(),
            round: request.tag.round,
            latency_ms,
            prompt_chars,
            response_chars,
            attempts: outcome.attempts,
            ok: error.is_none(),
            empty_response: empty,
            error,
        });
        outcome
            .result
            .map(|text| GenerationResponse { text, latency_ms, backend_id: self.backend.id() })
    }

    /// Embeds `text`, returning a finite unit-norm vector.
    pub fn embed(&self, text: &str, model_id: &str) -> Result<Vec<f32>, GatewayError> {
        let start = Instant::now();
        let outcome = if text.trim().is_empty() {
            BackendOutcome { result: Err(GatewayError::InvalidRequest("embedding input is empty".into())), attempts: 0 }
        } else {
            let raw = self.backend.embed(text, model_id);
            BackendOutcome {
                result: raw.result.and_then(|v| {
                    normalize(&v).map_err(|e| GatewayError::EmbedderFailure(e.to_string()))
                }),
                attempts: raw.attempts,
            }
        };
        let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
        self.record(CallRecord {
            seq: 0,
            kind: CallKind::Embed,
            role: "embedder".into(),
            agent_id: model_id.into(),
            round: 0,
            latency_ms,
            prompt_chars: text.chars().count(),
            response_chars: outcome.result.as_ref().map(|v| v.len()).unwrap_or(0),
            attempts: outcome.attempts,
            ok: outcome.result.is_ok(),
            empty_response: false,
            error: outcome.result.as_ref().err().map(|e| e.to_string()),
        });
        outcome.result
    }

    fn record(&self, mut rec: CallRecord) {
        let mut log = self.log.lock().unwrap_or_else(|p| p.into_inner());
        rec.seq = log.len() as u64;
        log.push(rec);
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).len()
    }
}

/// Knowledge-base embedder that goes through a gateway (and its call log).
pub struct GatewayEmbedder {
    gateway: Arc<Gateway>,
    model_id: String,
}

impl GatewayEmbedder {
    pub const IDENTITY_PREFIX: &'static str = "openai-compat:";

    pub fn new(gateway: Arc<Gateway>, model_id: impl Into<String>) -> Self {
        Self { gateway, model_id: model_id.into() }
    }

    /// The model id encoded in an identity string, if it is one of ours.
    pub fn model_from_identity(identity: &str) -> Option<&str> {
        identity.strip_prefix(Self::IDENTITY_PREFIX)
    }
}

impl Embedder for GatewayEmbedder {
    fn identity(&self) -> String {
        format!("{}{}", Self::IDENTITY_PREFIX, self.model_id)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        Ok(self.gateway.embed(text, &self.model_id)?)
    }
}
