//! Parsing of agent responses: leanings, justifications and citations.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use super::{Citation, Leaning};
use crate::knowledge_base::RetrievalResult;

fn leaning_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // "not guilty" is listed first so "guilty" never shadows it.
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[\s*#>_-]*leaning[\s*_]*:[\s*_]*(not[\s_-]*guilty|guilty|undecided)\b").unwrap()
    })
}

fn justification_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)^[\s*#>_-]*justification[\s*_]*:[\s*_]*(.*)$").unwrap())
}

fn citation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\[source:\s*([^,\]\n]+?)\s*,\s*chunk\s+(\d+)\s*\]").unwrap())
}

/// Reads the first `LEANING: <value>` line. Returns `(Undecided, true)` when
/// no line carries a recognised value.
pub fn parse_leaning(text: &str) -> (Leaning, bool) {
    for line in text.lines() {
        if let Some(caps) = leaning_re().captures(line) {
            let value = caps[1].to_lowercase();
            let leaning = if value.starts_with("not") {
                Leaning::NotGuilty
            } else if value == "guilty" {
                Leaning::Guilty
            } else {
                Leaning::Undecided
            };
            return (leaning, false);
        }
    }
    (Leaning::Undecided, true)
}

/// Text after the `JUSTIFICATION:` label (through the end of the response).
/// Without a label, the response minus any `LEANING:` line.
pub fn extract_justification(text: &str) -> String {
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if let Some(caps) = justification_re().captures(line) {
            let mut out = caps[1].trim().to_string();
            let tail: Vec<&str> = lines.collect();
            if !tail.is_empty() {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&tail.join("\n"));
            }
            return out.trim().to_string();
        }
    }
    text.lines()
        .filter(|l| !leaning_re().is_match(l))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

/// Every `[Source: <doc>, chunk <id>]` occurrence in order, duplicates kept.
pub fn find_citations(text: &str) -> Vec<Citation> {
    citation_re()
        .captures_iter(text)
        .filter_map(|caps| {
            Some(Citation { source_document: caps[1].trim().to_string(), chunk_id: caps[2].parse().ok()? })
        })
        .collect()
}

/// Citations in `text` with a validity flag per citation: true iff the
/// cited chunk is in `offered`.
pub fn check_citations(text: &str, offered: &[Citation]) -> (Vec<Citation>, Vec<bool>) {
    let offered: HashSet<(&str, u64)> =
        offered.iter().map(|c| (c.source_document.as_str(), c.chunk_id)).collect();
    let citations = find_citations(text);
    let validity = citations
        .iter()
        .map(|c| offered.contains(&(c.source_document.as_str(), c.chunk_id)))
        .collect();
    (citations, validity)
}

pub fn extract_citations(text: &str, offered_context: &[RetrievalResult]) -> (Vec<Citation>, Vec<bool>) {
    check_citations(text, &offered_citations(offered_context))
}

pub fn offered_citations(results: &[RetrievalResult]) -> Vec<Citation> {
    results
        .iter()
        .map(|r| Citation { source_document: r.chunk.source_document.clone(), chunk_id: r.chunk.chunk_id })
        .collect()
}
