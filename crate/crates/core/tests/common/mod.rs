//! Reference implementations used as test oracles, plus fixture helpers.
//! Each oracle is written the slow, obvious way and shares no code with the
//! library under test.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use deliberate_core::agents::Leaning;
use deliberate_core::case_model::{load_case, CaseFile};
use deliberate_core::knowledge_base::{DocumentChunk, Embedder, EmbedError, VectorStore};
use deliberate_core::llm_gateway::{Gateway, MockBackend, MockScript};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_case(id: &str) -> CaseFile {
    load_case(fixtures().join("cases").join(format!("{id}.json"))).expect("fixture case loads")
}

pub fn fixture_script(name: &str) -> MockScript {
    MockScript::load(&fixtures().join("scripts").join(name)).expect("fixture script loads")
}

pub fn mock_gateway(script: MockScript) -> Gateway {
    Gateway::new(Arc::new(MockBackend::new(script)))
}

/// Leaning counts by exhaustive tally, compared as exact fractions.
/// Returns (modal count, unique modal leaning, consensus).
pub fn consensus_oracle(
    votes: &[Leaning],
    threshold_num: u64,
    threshold_den: u64,
    strict: bool,
) -> (u64, Option<Leaning>, bool) {
    let all = [Leaning::Guilty, Leaning::NotGuilty, Leaning::Undecided];
    let mut counts = [0u64; 3];
    for v in votes {
        for (i, l) in all.iter().enumerate() {
            if v == l {
                counts[i] += 1;
            }
        }
    }
    let mut top = 0;
    for c in counts {
        if c > top {
            top = c;
        }
    }
    let winners: Vec<Leaning> = (0..3).filter(|&i| counts[i] == top).map(|i| all[i]).collect();
    let modal = if winners.len() == 1 { Some(winners[0]) } else { None };
    let n = votes.len() as u64;
    // top / n  vs  num / den  ⇔  top * den  vs  num * n
    let meets = if strict { top * threshold_den > threshold_num * n } else { top * threshold_den >= threshold_num * n };
    let consensus = meets && matches!(modal, Some(Leaning::Guilty) | Some(Leaning::NotGuilty));
    (top, modal, consensus)
}

/// Full-sort cosine ranking with ties broken by ascending chunk id.
/// Returns (chunk_id, score) for the top k.
pub fn ranking_oracle(store: &VectorStore, query: &[f32], k: usize) -> Vec<(u64, f64)> {
    let norm: f64 = query.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    let unit: Vec<f32> = query.iter().map(|x| (f64::from(*x) / norm) as f32).collect();
    let mut all: Vec<(u64, f64)> = (0..store.len())
        .map(|i| {
            let v = store.vector(i);
            let mut s = 0.0f64;
            for d in 0..v.len() {
                s += f64::from(unit[d]) * f64::from(v[d]);
            }
            (store.chunks()[i].chunk_id, s.clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Distinct-keyword coverage by trying every character offset.
pub fn grounding_oracle(text: &str, keywords: &[String]) -> f64 {
    let mut keys: Vec<Vec<char>> = Vec::new();
    for k in keywords {
        let k: Vec<char> = k.trim().to_lowercase().chars().collect();
        if !k.is_empty() && !keys.contains(&k) {
            keys.push(k);
        }
    }
    if keys.is_empty() {
        return 0.0;
    }
    let t: Vec<char> = text.to_lowercase().chars().collect();
    let mut hits = 0;
    for k in &keys {
        let mut found = false;
        if k.len() <= t.len() {
            for i in 0..=t.len() - k.len() {
                if t[i..i + k.len()] == k[..]
                    && (i == 0 || !is_word(t[i - 1]))
                    && (i + k.len() == t.len() || !is_word(t[i + k.len()]))
                {
                    found = true;
                    break;
                }
            }
        }
        if found {
            hits += 1;
        }
    }
    hits as f64 / keys.len() as f64
}

/// (mean, median, min, max) from a sorted copy.
pub fn latency_oracle(values: &[f64]) -> (f64, f64, f64, f64) {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
    let mean = s.iter().sum::<f64>() / n as f64;
    (mean, median, s[0], s[n - 1])
}

/// Reassembles a document from its chunks using only their spans.
pub fn reassemble(chunks: &[DocumentChunk]) -> String {
    let mut out: Vec<char> = Vec::new();
    for c in chunks {
        let text: Vec<char> = c.text.chars().collect();
        let skip = out.len().saturating_sub(c.char_start);
        out.extend_from_slice(&text[skip.min(text.len())..]);
    }
    out.into_iter().collect()
}

/// Embedder that ignores its input and returns a fixed vector.
pub struct FixedEmbedder {
    pub id: String,
    pub vector: Vec<f32>,
}

impl Embedder for FixedEmbedder {
    fn identity(&self) -> String {
        self.id.clone()
    }

    fn embed(&self, _text: &str) -> Result<Vec<f32>, EmbedError> {
        Ok(self.vector.clone())
    }
}

/// Byte offsets at which text can be inserted without splitting an existing
/// whole-word keyword occurrence.
pub fn safe_cuts(text: &str, keywords: &[String]) -> Vec<usize> {
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let offsets: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
    if lower.len() + 1 != offsets.len() {
        // lowercasing changed the char count; only the ends are safe
        return vec![0, text.len()];
    }
    let mut blocked = vec![false; offsets.len()];
    for k in keywords {
        let k: Vec<char> = k.trim().to_lowercase().chars().collect();
        if k.is_empty() || k.len() > lower.len() {
            continue;
        }
        for i in 0..=lower.len() - k.len() {
            let end = i + k.len();
            if lower[i..end] == k[..]
                && (i == 0 || !is_word(lower[i - 1]))
                && (end == lower.len() || !is_word(lower[end]))
            {
                for b in &mut blocked[i + 1..end] {
                    *b = true;
                }
            }
        }
    }
    offsets.into_iter().zip(blocked).filter(|(_, b)| !b).map(|(o, _)| o).collect()
}
