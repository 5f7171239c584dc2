use serde::{Deserialize, Serialize};

use super::KbError;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 150;

/// A contiguous character span of one source document.
///
/// Offsets count Unicode scalar values, not bytes, and are half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: u64,
    pub source_document: String,
    pub ordinal: u32,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self { chunk_size: DEFAULT_CHUNK_SIZE, overlap: DEFAULT_OVERLAP }
    }
}

impl ChunkParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, KbError> {
        if chunk_size == 0 || chunk_size <= overlap {
            return Err(KbError::InvalidChunkParams(format!(
                "chunk_size ({chunk_size}) must be positive and greater than overlap ({overlap})"
            )));
        }
        Ok(Self { chunk_size, overlap })
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Splits `text` into fixed-size character windows advancing by
/// `chunk_size - overlap`. The last window ends at the end of the text and
/// may be shorter than `chunk_size`. Chunk ids start at 0; callers building
/// a multi-document store renumber them.
pub fn chunk_document(
    text: &str,
    source: &str,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<DocumentChunk>, KbError> {
    let params = ChunkParams::new(chunk_size, overlap)?;
    if text.is_empty() {
        return Err(KbError::EmptyDocument(source.to_string()));
    }

    // Byte offset of every char boundary, including the end of the text.
    let bounds: Vec<usize> =
        text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect();
    let len = bounds.len() - 1;

    let mut chunks = Vec::with_capacity(len / params.stride() + 1);
    let mut start = 0usize;
    loop {
        let end = (start + params.chunk_size).min(len);
        chunks.push(DocumentChunk {
            chunk_id: chunks.len() as u64,
            source_document: source.to_string(),
            ordinal: chunks.len() as u32,
            text: text[bounds[start]..bounds[end]].to_string(),
            char_start: start,
            char_end: end,
        });
        if end == len {
            break;
        }
        start += params.stride();
    }
    Ok(chunks)
}
