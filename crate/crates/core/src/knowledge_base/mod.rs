//! Legal knowledge base: character chunking, embedding, a persisted flat
//! vector store and exact top-k cosine retrieval.
//!
//! A persisted store is a directory holding `manifest.json` (dimension,
//! embedder identity, chunking parameters, per-source counts and SHA-256
//! checksums), `vectors.bin` (little-endian `f32`, row-major in chunk id
//! order) and `chunks.jsonl` (one chunk record per line).

mod chunk;
mod embed;
mod store;

use thiserror::Error;

pub use chunk::{chunk_document, ChunkParams, DocumentChunk, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP};
pub use embed::{normalize, EmbedError, Embedder, HashEmbedder, DEFAULT_HASH_DIMENSION};
pub use store::{
    build_store, load_store, persist_store, query, read_corpus_dir, RetrievalResult, SourceEntry,
    StoreManifest, VectorStore, CHUNKS_FILE, MANIFEST_FILE, VECTORS_FILE,
};

pub const DEFAULT_RETRIEVAL_K: usize = 5;
pub const NO_CONTEXT: &str = "NO CONTEXT RETRIEVED";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("invalid chunk parameters: {0}")]
    InvalidChunkParams(String),
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error("no documents to ingest")]
    NoDocuments,
    #[error("embedder failed{}: {reason}", chunk_id.map(|c| format!(" on chunk {c}")).unwrap_or_default())]
    EmbedderFailure { chunk_id: Option<u64>, reason: String },
    #[error("store was built with embedder `{store}`, query uses `{embedder}`")]
    EmbedderMismatch { store: String, embedder: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("io error: {0}")]
    Io(String),
}

/// The marker line that opens each context block; agents cite chunks in this form.
pub fn source_marker(source_document: &str, chunk_id: u64) -> String {
    format!("[Source: {source_document}, chunk {chunk_id}]")
}

/// Renders retrieved chunks as prompt context, one marked block per result.
pub fn format_context(results: &[RetrievalResult]) -> String {
    if results.is_empty() {
        return NO_CONTEXT.to_string();
    }
    results
        .iter()
        .map(|r| format!("{}\n{}", source_marker(&r.chunk.source_document, r.chunk.chunk_id), r.chunk.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(source: &str, id: u64, text: &str, score: f64) -> RetrievalResult {
        RetrievalResult {
            chunk: DocumentChunk {
                chunk_id: id,
                source_document: source.into(),
                ordinal: 0,
                text: text.into(),
                char_start: 0,
                char_end: text.chars().count(),
            },
            score,
        }
    }

    #[test]
    fn single_block() {
        let ctx = format_context(&[result("IPC", 42, "Whoever commits murder...", 0.9)]);
        assert!(ctx.starts_with("[Source: IPC, chunk 42]\n"));
        assert!(ctx.ends_with("Whoever commits murder..."));
    }

    #[test]
    fn empty_results_sentinel() {
        assert_eq!(format_context(&[]), "NO CONTEXT RETRIEVED");
    }

    #[test]
    fn blocks_keep_result_order() {
        let ctx = format_context(&[result("IPC", 7, "first", 0.9), result("CrPC", 2, "second", 0.5)]);
        let a = ctx.find("[Source: IPC, chunk 7]").unwrap();
        let b = ctx.find("[Source: CrPC, chunk 2]").unwrap();
        assert!(a < b);
    }
}
