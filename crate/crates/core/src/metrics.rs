//! Run metrics: LLM latency, adjudicator participation, meaningful
//! statements, keyword grounding and cross-run verdict consistency.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentStatement, Role};
use crate::case_model::{normalize_keywords, CaseFile};
use crate::llm_gateway::{CallKind, CallRecord};
use crate::orchestrator::{check_consensus, DeliberationTranscript, Outcome, SimulationConfig};

pub const DEFAULT_MEANINGFUL_MIN_WORDS: usize = 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no input to summarise")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Mean, median (mean of the middle two for even counts), min and max in ms.
pub fn latency_stats(latencies: &[f64]) -> Result<LatencyStats, MetricsError> {
    if latencies.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(bad) = latencies.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(MetricsError::InvalidInput(format!("latency {bad} is not a finite non-negative value")));
    }
    let n = latencies.len();
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &v in latencies {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let mut scratch = latencies.to_vec();
    let (_, upper, _) = scratch.select_nth_unstable_by(n / 2, f64::total_cmp);
    let upper = *upper;
    let median = if n % 2 == 1 {
        upper
    } else {
        // the lower middle is the largest value left of the pivot
        let lower = scratch[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    };
    Ok(LatencyStats { mean: sum / n as f64, median, min, max, count: n })
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True when `keyword` occurs in `haystack` with non-word characters (or
/// the text edge) on both sides. Both arguments must already be lower-cased.
fn contains_word(haystack: &str, keyword: &str) -> bool {
    if keyword.is_empty() {
        return false;
    }
    // every start position, since a rejected match may overlap an accepted one
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(keyword) {
        let at = from + pos;
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + keyword.len()..].chars().next();
        if !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char) {
            return true;
        }
        from = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Fraction of distinct keywords that occur in `text`, matched
/// case-insensitively on word boundaries.
pub fn grounding_score(text: &str, keywords: &[String]) -> f64 {
    let keys: BTreeSet<String> = normalize_keywords(keywords).into_iter().filter(|k| !k.is_empty()).collect();
    if keys.is_empty() {
        return 0.0;
    }
    let lower = text.to_lowercase();
    let hits = keys.iter().filter(|k| contains_word(&lower, k)).count();
    hits as f64 / keys.len() as f64
}

/// A statement is meaningful when its justification has at least
/// `min_words` words and it either mentions a case keyword or carries a
/// valid citation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeaningfulRule {
    pub min_words: usize,
}

impl Default for MeaningfulRule {
    fn default() -> Self {
        Self { min_words: DEFAULT_MEANINGFUL_MIN_WORDS }
    }
}

impl MeaningfulRule {
    pub fn evaluate(&self, statement: &AgentStatement, keywords: &[String]) -> bool {
        statement.justification.split_whitespace().count() >= self.min_words
            && (grounding_score(&statement.justification, keywords) > 0.0 || statement.valid_citation_count() > 0)
    }
}

pub fn is_meaningful(statement: &AgentStatement, keywords: &[String]) -> bool {
    MeaningfulRule::default().evaluate(statement, keywords)
}

/// Share of adjudicators with a non-empty statement in one round.
pub fn participation_rate(round_statements: &[AgentStatement], num_adjudicators: usize) -> f64 {
    if num_adjudicators == 0 {
        return 0.0;
    }
    let speakers: BTreeSet<&str> = round_statements
        .iter()
        .filter(|s| s.role == Role::Adjudicator && !s.justification.trim().is_empty())
        .map(|s| s.agent_id.as_str())
        .collect();
    (speakers.len() as f64 / num_adjudicators as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub latency: LatencyStats,
    pub participation_rate_per_round: Vec<f64>,
    pub mean_participation_rate: f64,
    pub total_statements: usize,
    pub meaningful_statements: usize,
    pub avg_meaningful_per_adjudicator: f64,
    pub avg_grounding_score: f64,
    pub final_agreement_ratio: f64,
    pub parse_warnings: usize,
    pub citations_total: usize,
    pub citations_valid: usize,
}

/// Summarises a completed run. Grounding and meaningfulness are computed
/// over adjudicator statements only; latency over generation calls.
pub fn summarize(
    transcript: &DeliberationTranscript,
    call_log: &[CallRecord],
    case: &CaseFile,
    config: &SimulationConfig,
) -> Result<MetricsSummary, MetricsError> {
    let last = transcript.rounds.last().ok_or(MetricsError::EmptyInput)?;
    let adjudicator_statements: Vec<&AgentStatement> =
        transcript.rounds.iter().flat_map(|r| r.statements.iter()).collect();
    if adjudicator_statements.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let mut latencies: Vec<f64> = call_log
        .iter()
        .filter(|c| c.kind == CallKind::Generate && c.ok)
        .map(|c| c.latency_ms)
        .collect();
    if latencies.is_empty() {
        latencies = transcript.all_statements().map(|s| s.latency_ms).collect();
    }
    let latency = latency_stats(&latencies)?;

    let rule = MeaningfulRule { min_words: config.meaningful_min_words };
    let participation: Vec<f64> =
        transcript.rounds.iter().map(|r| participation_rate(&r.statements, config.num_adjudicators)).collect();
    let meaningful = adjudicator_statements.iter().filter(|s| rule.evaluate(s, &case.keywords)).count();
    let grounding_sum: f64 =
        adjudicator_statements.iter().map(|s| grounding_score(&s.justification, &case.keywords)).sum();
    let all: Vec<&AgentStatement> = transcript.all_statements().collect();

    Ok(MetricsSummary {
        latency,
        mean_participation_rate: participation.iter().sum::<f64>() / participation.len() as f64,
        participation_rate_per_round: participation,
        total_statements: adjudicator_statements.len(),
        meaningful_statements: meaningful,
        avg_meaningful_per_adjudicator: meaningful as f64 / config.num_adjudicators as f64,
        avg_grounding_score: grounding_sum / adjudicator_statements.len() as f64,
        final_agreement_ratio: check_consensus(&last.statements, config.consensus_threshold, config.threshold_rule)
            .agreement_ratio,
        parse_warnings: adjudicator_statements.iter().filter(|s| s.parse_warning).count(),
        citations_total: all.iter().map(|s| s.citations.len()).sum(),
        citations_valid: all.iter().map(|s| s.valid_citation_count()).sum(),
    })
}

/// Outcome of one replicate run, including runs that aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    Guilty,
    NotGuilty,
    Hung,
    Aborted,
}

impl From<Outcome> for RunOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Guilty => RunOutcome::Guilty,
            Outcome::NotGuilty => RunOutcome::NotGuilty,
            Outcome::Hung => RunOutcome::Hung,
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunOutcome::Guilty => "Guilty",
            RunOutcome::NotGuilty => "Not Guilty",
            RunOutcome::Hung => "Hung",
            RunOutcome::Aborted => "Aborted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsistencyLabel {
    #[serde(rename = "Very High")]
    VeryHigh,
    High,
    Medium,
    Low,
}

impl fmt::Display for ConsistencyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsistencyLabel::VeryHigh => "Very High",
            ConsistencyLabel::High => "High",
            ConsistencyLabel::Medium => "Medium",
            ConsistencyLabel::Low => "Low",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub runs: usize,
    pub verdict_distribution: BTreeMap<RunOutcome, usize>,
    pub modal_count: usize,
    pub consistency_rate: f64,
    pub label: ConsistencyLabel,
}

/// Verdict distribution and the share of runs that reached the most common verdict.
pub fn consistency(verdicts: &[RunOutcome]) -> Result<ConsistencySummary, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut dist = BTreeMap::new();
    for v in verdicts {
        *dist.entry(*v).or_insert(0usize) += 1;
    }
    let runs = verdicts.len();
    let modal = dist.values().copied().max().unwrap_or(0);
    // integer comparisons: modal/runs >= 0.8  <=>  5*modal >= 4*runs
    let label = if modal == runs {
        ConsistencyLabel::VeryHigh
    } else if 5 * modal >= 4 * runs {
        ConsistencyLabel::High
    } else if 5 * modal >= 3 * runs {
        ConsistencyLabel::Medium
    } else {
        ConsistencyLabel::Low
    };
    Ok(ConsistencySummary {
        runs,
        verdict_distribution: dist,
        modal_count: modal,
        consistency_rate: modal as f64 / runs as f64,
        label,
    })
}
