use thiserror::Error;

use crate::llm_gateway::GatewayError;

pub const DEFAULT_HASH_DIMENSION: usize = 384;
const HASH_IDENTITY_PREFIX: &str = "hash-bow-v1";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("embedder failure: {0}")]
    Failure(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Turns text into a unit-norm dense vector.
///
/// `identity` is recorded in a store's manifest; a store only answers
/// queries from an embedder with the same identity.
pub trait Embedder: Send + Sync {
    fn identity(&self) -> String;
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

/// Scales `values` to unit L2 norm. Rejects non-finite input and the zero vector.
pub fn normalize(values: &[f64]) -> Result<Vec<f32>, EmbedError> {
    if values.is_empty() {
        return Err(EmbedError::Failure("embedding has zero dimensions".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::Failure("embedding contains non-finite values".into()));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::Failure("zero vector cannot be normalised".into()));
    }
    Ok(values.iter().map(|v| (v / norm) as f32).collect())
}

/// Lower-cased alphanumeric runs.
fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// Deterministic offline embedder: hashed bag of words, L2-normalised.
///
/// Each lower-cased word token increments one bucket chosen by a 64-bit
/// FNV-1a hash. Texts with no alphanumeric token have no embedding.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Recognises identities produced by [`HashEmbedder::identity`].
    pub fn from_identity(identity: &str) -> Option<Self> {
        let dim = identity.strip_prefix(HASH_IDENTITY_PREFIX)?.strip_prefix(":d=")?;
        dim.parse().ok().filter(|d| *d > 0).map(Self::new)
    }

    pub fn raw_counts(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0.0; self.dimension];
        for tok in word_tokens(text) {
            counts[(fnv1a(tok.as_bytes()) % self.dimension as u64) as usize] += 1.0;
        }
        counts
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIMENSION)
    }
}

impl Embedder for HashEmbedder {
    fn identity(&self) -> String {
        format!("{HASH_IDENTITY_PREFIX}:d={}", self.dimension)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        normalize(&self.raw_counts(text)).map_err(|_| {
            EmbedError::Failure(format!("text has no word tokens: {:?}", truncate(text, 40)))
        })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}
