use std::collections::BTreeMap;
use std::path::Path;

use super::{Backend, BackendOutcome, CallTag, GatewayError, GenerationRequest};
use crate::knowledge_base::HashEmbedder;

pub const DEFAULT_KEY: &str = "default";

/// Scripted responses keyed by `role:agent_id:round`.
///
/// Lookup for a call tagged (run, role, id, round) tries, in order:
/// `run<run>/role:id:round`, `run<run>/role:id:*`, `run<run>/role:*:round`,
/// `run<run>/role:*:*`, then the same four keys without the run prefix, then
/// `default`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockScript {
    entries: BTreeMap<String, String>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.insert(key, response);
        self
    }

    pub fn insert(&mut self, key: impl Into<String>, response: impl Into<String>) {
        self.entries.insert(key.into(), response.into());
    }

    pub fn from_json(raw: &str) -> Result<Self, GatewayError> {
        let entries: BTreeMap<String, String> = serde_json::from_str(raw).map_err(|e| {
            GatewayError::InvalidRequest(format!(
                "mock script must be a JSON object of string responses: {e}"
            ))
        })?;
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::InvalidRequest(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        Self::from_json(&raw)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("script serialises")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, tag: &CallTag) -> Option<&str> {
        let round = tag.round.to_string();
        let patterns = [
            [tag.agent_id.as_str(), round.as_str()],
            [tag.agent_id.as_str(), "*"],
            ["*", round.as_str()],
            ["*", "*"],
        ];
        let run_prefix = format!("run{}/", tag.run);
        for prefix in [run_prefix.as_str(), ""] {
            for [id, r] in patterns {
                let key = format!("{prefix}{}:{id}:{r}", tag.role);
                if let Some(v) = self.entries.get(&key) {
                    return Some(v);
                }
            }
        }
        self.entries.get(DEFAULT_KEY).map(String::as_str)
    }
}

/// Deterministic backend: generation replays a [`MockScript`], embedding
/// uses the hashed bag-of-words embedder.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: MockScript,
    embedder: HashEmbedder,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script, embedder: HashEmbedder::default() }
    }

    pub fn with_embedding_dimension(mut self, dimension: usize) -> Self {
        self.embedder = HashEmbedder::new(dimension);
        self
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn generate(&self, request: &GenerationRequest) -> BackendOutcome<String> {
        BackendOutcome::once(
            self.script
                .lookup(&request.tag)
                .map(str::to_string)
                .ok_or_else(|| GatewayError::ScriptExhausted(request.tag.script_key())),
        )
    }

    fn embed(&self, text: &str, _model_id: &str) -> BackendOutcome<Vec<f64>> {
        BackendOutcome::once(Ok(self.embedder.raw_counts(text)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{Gateway, DEFAULT_MAX_TOKENS};
    use std::sync::Arc;

    fn req(tag: CallTag) -> GenerationRequest {
        GenerationRequest {
            system_prompt: String::new(),
            user_prompt: "prompt".into(),
            model_id: "mock".into(),
            temperature: 0.2,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
            tag,
        }
    }

    #[test]
    fn scripted_echo() {
        let script = MockScript::new().with("adjudicator:2:1", "LEANING: Guilty");
        let gw = Gateway::new(Arc::new(MockBackend::new(script)));
        let resp = gw.generate(&req(CallTag::new("adjudicator", "2", 1))).unwrap();
        assert_eq!(resp.text, "LEANING: Guilty");
        assert!(resp.latency_ms >= 0.0);
        assert_eq!(resp.backend_id, "mock");
    }

    #[test]
    fn missing_key_is_script_exhausted() {
        let gw = Gateway::new(Arc::new(MockBackend::new(MockScript::new())));
        let err = gw.generate(&req(CallTag::new("judge", "judge", 0))).unwrap_err();
        assert_eq!(err, GatewayError::ScriptExhausted("judge:judge:0".into()));
    }

    #[test]
    fn identical_requests_identical_texts() {
        let script = MockScript::new().with(DEFAULT_KEY, "same");
        let gw = Gateway::new(Arc::new(MockBackend::new(script)));
        let a = gw.generate(&req(CallTag::new("defense", "defense", 0))).unwrap();
        let b = gw.generate(&req(CallTag::new("defense", "defense", 0))).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn lookup_precedence() {
        let script = MockScript::new()
            .with("adjudicator:*:*", "any")
            .with("adjudicator:*:2", "round two")
            .with("adjudicator:3:*", "agent three")
            .with("adjudicator:3:2", "exact")
            .with("run1/adjudicator:*:*", "run one")
            .with(DEFAULT_KEY, "fallback");
        let tag = |id: &str, round| CallTag::new("adjudicator", id, round);
        assert_eq!(script.lookup(&tag("3", 2)), Some("exact"));
        assert_eq!(script.lookup(&tag("3", 1)), Some("agent three"));
        assert_eq!(script.lookup(&tag("1", 2)), Some("round two"));
        assert_eq!(script.lookup(&tag("1", 1)), Some("any"));
        assert_eq!(script.lookup(&tag("3", 2).with_run(1)), Some("run one"));
        assert_eq!(script.lookup(&CallTag::new("judge", "judge", 0)), Some("fallback"));
    }

    #[test]
    fn json_round_trip() {
        let script = MockScript::new().with("judge:judge:0", "Instructions").with(DEFAULT_KEY, "x");
        assert_eq!(MockScript::from_json(&script.to_json_pretty()).unwrap(), script);
        assert!(MockScript::from_json(r#"{"a": 1}"#).is_err());
    }
}
