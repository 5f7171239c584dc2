use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chunk::{chunk_document, ChunkParams, DocumentChunk};
use super::embed::{EmbedError, Embedder};
use super::KbError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub name: String,
    pub chunks: usize,
    pub chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format_version: u32,
    pub dimension: usize,
    pub embedder: String,
    pub chunk_size: usize,
    pub overlap: usize,
    pub chunk_count: usize,
    pub sources: Vec<SourceEntry>,
    /// SHA-256 of `vectors.bin`, lower-case hex.
    pub vectors_sha256: String,
    /// SHA-256 of `chunks.jsonl`, lower-case hex.
    pub chunks_sha256: String,
}

/// Chunk table, row-major vector table and manifest. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    manifest: StoreManifest,
    chunks: Vec<DocumentChunk>,
    vectors: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk: DocumentChunk,
    /// Cosine similarity with the query, in [-1, 1].
    pub score: f64,
}

impl VectorStore {
    /// Assembles a store from pre-computed parts. Vectors are re-normalised
    /// and every table invariant is checked.
    pub fn from_parts(
        embedder: &str,
        params: ChunkParams,
        chunks: Vec<DocumentChunk>,
        vectors: Vec<Vec<f32>>,
    ) -> Result<Self, KbError> {
        if chunks.is_empty() {
            return Err(KbError::NoDocuments);
        }
        if chunks.len() != vectors.len() {
            return Err(KbError::CorruptStore(format!(
                "{} chunks but {} vectors",
                chunks.len(),
                vectors.len()
            )));
        }
        for (i, c) in chunks.iter().enumerate() {
            if c.chunk_id != i as u64 {
                return Err(KbError::CorruptStore(format!(
                    "chunk at position {i} has id {}",
                    c.chunk_id
                )));
            }
        }
        let dimension = vectors[0].len();
        let mut flat = Vec::with_capacity(dimension * vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dimension {
                return Err(KbError::DimensionMismatch { expected: dimension, found: v.len() });
            }
            let wide: Vec<f64> = v.iter().map(|x| f64::from(*x)).collect();
            let unit = super::embed::normalize(&wide).map_err(|e| KbError::EmbedderFailure {
                chunk_id: Some(i as u64),
                reason: e.to_string(),
            })?;
            flat.extend(unit);
        }

        let mut sources: Vec<SourceEntry> = Vec::new();
        for c in &chunks {
            match sources.last_mut() {
                Some(s) if s.name == c.source_document => {
                    s.chunks += 1;
                    s.chars = s.chars.max(c.char_end);
                }
                _ => sources.push(SourceEntry {
                    name: c.source_document.clone(),
                    chunks: 1,
                    chars: c.char_end,
                }),
            }
        }

        let mut manifest = StoreManifest {
            format_version: FORMAT_VERSION,
            dimension,
            embedder: embedder.to_string(),
            chunk_size: params.chunk_size,
            overlap: params.overlap,
            chunk_count: chunks.len(),
            sources,
            vectors_sha256: String::new(),
            chunks_sha256: String::new(),
        };
        manifest.vectors_sha256 = sha256_hex(&encode_vectors(&flat));
        manifest.chunks_sha256 = sha256_hex(&encode_chunks(&chunks));
        Ok(Self { manifest, chunks, vectors: flat })
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn dimension(&self) -> usize {
        self.manifest.dimension
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[DocumentChunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: u64) -> Option<&DocumentChunk> {
        self.chunks.get(usize::try_from(chunk_id).ok()?)
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        let d = self.dimension();
        &self.vectors[index * d..(index + 1) * d]
    }

    /// Top-`k` chunks by cosine similarity with an already computed query vector.
    pub fn search_vector(&self, query: &[f32], k: usize) -> Result<Vec<RetrievalResult>, KbError> {
        if k == 0 {
            return Err(KbError::InvalidQuery("k must be at least 1".into()));
        }
        if query.len() != self.dimension() {
            return Err(KbError::DimensionMismatch {
                expected: self.dimension(),
                found: query.len(),
            });
        }
        let wide: Vec<f64> = query.iter().map(|x| f64::from(*x)).collect();
        let unit = super::embed::normalize(&wide)
            .map_err(|e| KbError::InvalidQuery(format!("query vector: {e}")))?;

        // Bounded min-heap on rank; the root is the weakest kept candidate.
        let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
        for index in 0..self.len() {
            let score = dot(&unit, self.vector(index)).clamp(-1.0, 1.0);
            let cand = Ranked { score, index };
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if heap.peek().is_some_and(|Reverse(weakest)| cand > *weakest) {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }
        let mut kept: Vec<Ranked> = heap.into_iter().map(|Reverse(r)| r).collect();
        kept.sort_by(|a, b| b.cmp(a));
        Ok(kept
            .into_iter()
            .map(|r| RetrievalResult { chunk: self.chunks[r.index].clone(), score: r.score })
            .collect())
    }
}

/// Rank order: higher score first, then lower chunk position.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    index: usize,
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

/// Chunks and embeds every document, assigning store-wide chunk ids in
/// document order.
pub fn build_store(
    documents: &[(String, String)],
    params: ChunkParams,
    embedder: &dyn Embedder,
) -> Result<VectorStore, KbError> {
    if documents.is_empty() {
        return Err(KbError::NoDocuments);
    }
    let params = ChunkParams::new(params.chunk_size, params.overlap)?;
    let mut chunks = Vec::new();
    for (name, text) in documents {
        for mut c in chunk_document(text, name, params.chunk_size, params.overlap)? {
            c.chunk_id = chunks.len() as u64;
            chunks.push(c);
        }
    }
    let vectors = chunks
        .par_iter()
        .map(|c| {
            embedder.embed(&c.text).map_err(|e| KbError::EmbedderFailure {
                chunk_id: Some(c.chunk_id),
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    VectorStore::from_parts(&embedder.identity(), params, chunks, vectors)
}

/// Reads every `.txt` file in `dir` (sorted by name); the file stem names the source.
pub fn read_corpus_dir(dir: &Path) -> Result<Vec<(String, String)>, KbError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| KbError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(KbError::NoDocuments);
    }
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let text =
                fs::read_to_string(&p).map_err(|e| KbError::Io(format!("{}: {e}", p.display())))?;
            Ok((name, text))
        })
        .collect()
}

/// Embeds `query_text` and returns the `k` best chunks.
pub fn query(
    store: &VectorStore,
    query_text: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<RetrievalResult>, KbError> {
    let identity = embedder.identity();
    if identity != store.manifest.embedder {
        return Err(KbError::EmbedderMismatch {
            store: store.manifest.embedder.clone(),
            embedder: identity,
        });
    }
    let q = embedder.embed(query_text).map_err(|e| match e {
        EmbedError::EmptyInput => KbError::InvalidQuery("query text is empty".into()),
        other => KbError::EmbedderFailure { chunk_id: None, reason: other.to_string() },
    })?;
    store.search_vector(&q, k)
}

fn encode_vectors(flat: &[f32]) -> Vec<u8> {
    flat.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn encode_chunks(chunks: &[DocumentChunk]) -> Vec<u8> {
    let mut out = Vec::new();
    for c in chunks {
        serde_json::to_writer(&mut out, c).expect("chunk serialises");
        out.push(b'\n');
    }
    out
}

fn encode_manifest(m: &StoreManifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(m).expect("manifest serialises");
    out.push(b'\n');
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the store as a directory. Files are staged in a sibling directory
/// and moved into place, so a failed write leaves no partial store at `path`.
pub fn persist_store(store: &VectorStore, path: &Path) -> Result<(), KbError> {
    let io = |e: std::io::Error| KbError::Io(format!("{}: {e}", path.display()));
    let file_name = path
        .file_name()
        .ok_or_else(|| KbError::Io(format!("{}: not a directory path", path.display())))?;
    let staging =
        path.with_file_name(format!(".{}.staging-{}", file_name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io)?;
    }
    fs::create_dir_all(&staging).map_err(io)?;
    fs::write(staging.join(VECTORS_FILE), encode_vectors(&store.vectors)).map_err(io)?;
    fs::write(staging.join(CHUNKS_FILE), encode_chunks(&store.chunks)).map_err(io)?;
    fs::write(staging.join(MANIFEST_FILE), encode_manifest(&store.manifest)).map_err(io)?;
    if path.exists() {
        fs::remove_dir_all(path).map_err(io)?;
    }
    fs::rename(&staging, path).map_err(io)?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<VectorStore, KbError> {
    let read = |name: &str| {
        let p = path.join(name);
        fs::read(&p).map_err(|e| KbError::CorruptStore(format!("{}: {e}", p.display())))
    };
    let manifest: StoreManifest = serde_json::from_slice(&read(MANIFEST_FILE)?)
        .map_err(|e| KbError::CorruptStore(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(KbError::CorruptStore(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    if manifest.dimension == 0 || manifest.chunk_count == 0 {
        return Err(KbError::CorruptStore("manifest declares an empty store".into()));
    }

    let vector_bytes = read(VECTORS_FILE)?;
    let per_chunk_bytes = manifest.chunk_count * 4;
    if vector_bytes.len() != manifest.chunk_count * manifest.dimension * 4 {
        if vector_bytes.len() % per_chunk_bytes == 0 {
            return Err(KbError::DimensionMismatch {
                expected: manifest.dimension,
                found: vector_bytes.len() / per_chunk_bytes,
            });
        }
        return Err(KbError::CorruptStore(format!(
            "vectors.bin has {} bytes, expected {}",
            vector_bytes.len(),
            manifest.chunk_count * manifest.dimension * 4
        )));
    }
    if sha256_hex(&vector_bytes) != manifest.vectors_sha256 {
        return Err(KbError::CorruptStore("vectors.bin checksum mismatch".into()));
    }

    let chunk_bytes = read(CHUNKS_FILE)?;
    if sha256_hex(&chunk_bytes) != manifest.chunks_sha256 {
        return Err(KbError::CorruptStore("chunks.jsonl checksum mismatch".into()));
    }
    let chunks = chunk_bytes
        .split(|b| *b == b'\n')
        .filter(|line| !line.is_empty())
        .map(|line| {
            serde_json::from_slice::<DocumentChunk>(line)
                .map_err(|e| KbError::CorruptStore(format!("chunks.jsonl: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if chunks.len() != manifest.chunk_count {
        return Err(KbError::CorruptStore(format!(
            "manifest lists {} chunks, chunks.jsonl has {}",
            manifest.chunk_count,
            chunks.len()
        )));
    }
    if chunks.iter().enumerate().any(|(i, c)| c.chunk_id != i as u64) {
        return Err(KbError::CorruptStore("chunk ids are not consecutive from 0".into()));
    }

    let vectors: Vec<f32> = vector_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(KbError::CorruptStore("vectors.bin contains non-finite values".into()));
    }
    Ok(VectorStore { manifest, chunks, vectors })
}
