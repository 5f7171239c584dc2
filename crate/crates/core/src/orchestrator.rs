//! Simulation lifecycle: initialization, trial preparation (Judge, then
//! Prosecution, then Defense), deliberation rounds with a consensus check
//! after each, and conclusion with a verdict or a hung panel.

use std::fmt;
use std::thread;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    self, AdjudicatorInputs, AgentContext, AgentError, AgentSettings, AgentStatement, CounselArgument,
    JudgeInstructions, Leaning, Side, TemplateSet,
};
use crate::case_model::CaseFile;
use crate::knowledge_base::{Embedder, VectorStore, DEFAULT_RETRIEVAL_K};
use crate::llm_gateway::{CallRecord, Gateway, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, MAX_TEMPERATURE};
use crate::metrics::{self, MetricsSummary, DEFAULT_MEANINGFUL_MIN_WORDS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Greater,
    GreaterOrEqual,
}

impl ThresholdRule {
    pub fn satisfied(self, ratio: f64, threshold: f64) -> bool {
        const EPS: f64 = 1e-12;
        match self {
            ThresholdRule::Greater => ratio > threshold + EPS,
            ThresholdRule::GreaterOrEqual => ratio >= threshold - EPS,
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdRule::Greater => "greater",
            ThresholdRule::GreaterOrEqual => "greater_or_equal",
        })
    }
}

impl std::str::FromStr for ThresholdRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace('-', "_").as_str() {
            "greater" | "gt" | ">" => Ok(ThresholdRule::Greater),
            "greater_or_equal" | "ge" | "gte" | ">=" => Ok(ThresholdRule::GreaterOrEqual),
            other => Err(format!("unknown threshold rule `{other}` (expected greater or greater_or_equal)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_adjudicators: usize,
    pub consensus_threshold: f64,
    pub threshold_rule: ThresholdRule,
    pub max_rounds: u32,
    pub rag_judge: bool,
    pub rag_counsel: bool,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retrieval_k: usize,
    pub seed: Option<u64>,
    pub sequential_rounds: bool,
    pub parallel_adjudicators: bool,
    pub meaningful_min_words: usize,
    pub run_index: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            num_adjudicators: 5,
            consensus_threshold: 0.80,
            threshold_rule: ThresholdRule::GreaterOrEqual,
            max_rounds: 5,
            rag_judge: false,
            rag_counsel: false,
            model_id: "default".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            retrieval_k: DEFAULT_RETRIEVAL_K,
            seed: None,
            sequential_rounds: false,
            parallel_adjudicators: true,
            meaningful_min_words: DEFAULT_MEANINGFUL_MIN_WORDS,
            run_index: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.num_adjudicators == 0 {
            return err("num_adjudicators must be at least 1".into());
        }
        if !(self.consensus_threshold > 0.0 && self.consensus_threshold <= 1.0) {
            return err(format!("consensus_threshold {} outside (0, 1]", self.consensus_threshold));
        }
        if self.max_rounds == 0 {
            return err("max_rounds must be at least 1".into());
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return err(format!("temperature {} outside [0, {MAX_TEMPERATURE}]", self.temperature));
        }
        if self.max_tokens == 0 {
            return err("max_tokens must be positive".into());
        }
        if self.retrieval_k == 0 {
            return err("retrieval_k must be at least 1".into());
        }
        if self.model_id.trim().is_empty() {
            return err("model_id is empty".into());
        }
        Ok(())
    }

    pub fn uses_rag(&self) -> bool {
        self.rag_judge || self.rag_counsel
    }

    pub fn agent_settings(&self) -> AgentSettings {
        AgentSettings {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
            retrieval_k: self.retrieval_k,
            rag_judge: self.rag_judge,
            rag_counsel: self.rag_counsel,
            num_adjudicators: self.num_adjudicators,
            sequential_rounds: self.sequential_rounds,
            run_index: self.run_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCheck {
    /// Count of the most frequent leaning (Undecided included) over all adjudicators.
    pub agreement_ratio: f64,
    /// `None` when two or more leanings tie for most frequent.
    pub modal_leaning: Option<Leaning>,
    pub consensus: bool,
}

/// Consensus over one round's leanings.
///
/// Consensus needs a unique modal leaning that is not Undecided and whose
/// share satisfies `rule` against `threshold`.
pub fn consensus_of(leanings: &[Leaning], threshold: f64, rule: ThresholdRule) -> ConsensusCheck {
    if leanings.is_empty() {
        return ConsensusCheck { agreement_ratio: 0.0, modal_leaning: None, consensus: false };
    }
    let counts = Leaning::ALL.map(|l| leanings.iter().filter(|x| **x == l).count());
    let top = counts.iter().copied().max().unwrap_or(0);
    let mut modal = Leaning::ALL.iter().zip(counts).filter(|(_, c)| *c == top).map(|(l, _)| *l);
    let modal_leaning = match (modal.next(), modal.next()) {
        (Some(l), None) => Some(l),
        _ => None,
    };
    let agreement_ratio = top as f64 / leanings.len() as f64;
    let consensus = matches!(modal_leaning, Some(l) if l != Leaning::Undecided)
        && rule.satisfied(agreement_ratio, threshold);
    ConsensusCheck { agreement_ratio, modal_leaning, consensus }
}

/// [`consensus_of`] over statements; a statement without a leaning counts as Undecided.
pub fn check_consensus(statements: &[AgentStatement], threshold: f64, rule: ThresholdRule) -> ConsensusCheck {
    let leanings: Vec<Leaning> = statements.iter().map(|s| s.leaning.unwrap_or(Leaning::Undecided)).collect();
    consensus_of(&leanings, threshold, rule)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationRound {
    pub round: u32,
    /// One statement per adjudicator, ordered by adjudicator number.
    pub statements: Vec<AgentStatement>,
    pub consensus: ConsensusCheck,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeliberationTranscript {
    /// Judge instructions, prosecution argument, defense argument, in that order.
    pub preparation: Vec<AgentStatement>,
    pub rounds: Vec<DeliberationRound>,
}

impl DeliberationTranscript {
    pub fn all_statements(&self) -> impl Iterator<Item = &AgentStatement> {
        self.preparation.iter().chain(self.rounds.iter().flat_map(|r| r.statements.iter()))
    }

    pub fn adjudicator_statement_count(&self) -> usize {
        self.rounds.iter().map(|r| r.statements.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Guilty,
    NotGuilty,
    Hung,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Guilty => "Guilty",
            Outcome::NotGuilty => "Not Guilty",
            Outcome::Hung => "Hung",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub final_agreement_ratio: f64,
    pub rounds_used: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrchestratorError {
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Hung-panel verdict after `max_rounds` rounds without consensus.
pub fn declare_hung(transcript: &DeliberationTranscript, config: &SimulationConfig) -> Result<Verdict, OrchestratorError> {
    let completed = transcript.rounds.len();
    if completed != config.max_rounds as usize {
        return Err(OrchestratorError::Precondition(format!(
            "hung panel requires {} completed rounds, transcript has {completed}",
            config.max_rounds
        )));
    }
    let last = transcript.rounds.last().ok_or_else(|| OrchestratorError::Precondition("no rounds".into()))?;
    if last.consensus.consensus {
        return Err(OrchestratorError::Precondition(format!("round {} reached consensus", last.round)));
    }
    Ok(Verdict { outcome: Outcome::Hung, final_agreement_ratio: last.consensus.agreement_ratio, rounds_used: config.max_rounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initialization,
    TrialPreparation,
    Deliberation,
    ConsensusCheck,
    Conclusion,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Initialization => "initialization",
            Phase::TrialPreparation => "trial preparation",
            Phase::Deliberation => "deliberation",
            Phase::ConsensusCheck => "consensus check",
            Phase::Conclusion => "conclusion",
        })
    }
}

/// Wall-clock data, isolated so the rest of a report is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_at: String,
    pub finished_at: String,
    pub wall_ms: f64,
    pub calls: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub case_id: String,
    pub run_index: u32,
    pub config: SimulationConfig,
    pub backend_id: String,
    pub template_set: String,
    pub case: CaseFile,
    pub verdict: Verdict,
    pub transcript: DeliberationTranscript,
    pub metrics: MetricsSummary,
    pub timing: Timing,
}

/// Everything produced before a run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialRun {
    pub case_id: String,
    pub config: SimulationConfig,
    pub transcript: DeliberationTranscript,
    /// Statements completed in the round that failed.
    pub incomplete_round: Vec<AgentStatement>,
    pub timing: Timing,
}

#[derive(Debug, Error)]
#[error("run aborted during {phase}: {cause}")]
pub struct RunAborted {
    pub phase: Phase,
    pub cause: String,
    pub partial: Box<PartialRun>,
}

/// Knowledge base plus the embedder its manifest names.
pub type KnowledgeBase<'a> = (&'a VectorStore, &'a dyn Embedder);

pub fn run_simulation(
    config: &SimulationConfig,
    case: &CaseFile,
    kb: Option<KnowledgeBase<'_>>,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<SimulationReport, RunAborted> {
    let started = Utc::now();
    let clock = std::time::Instant::now();
    let mut transcript = DeliberationTranscript::default();

    let abort = |phase: Phase, cause: String, transcript: &DeliberationTranscript, incomplete: Vec<AgentStatement>| {
        log::error!("[{}] {phase}: {cause}", case.case_id);
        RunAborted {
            phase,
            cause,
            partial: Box::new(PartialRun {
                case_id: case.case_id.clone(),
                config: config.clone(),
                transcript: transcript.clone(),
                incomplete_round: incomplete,
                timing: Timing {
                    started_at: started.to_rfc3339_opts(SecondsFormat::Millis, true),
                    finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
                    wall_ms: clock.elapsed().as_secs_f64() * 1000.0,
                    calls: gateway.call_log(),
                },
            }),
        }
    };

    log::info!("[{}] {}: {} adjudicators, max {} rounds", case.case_id, Phase::Initialization, config.num_adjudicators, config.max_rounds);
    if let Err(e) = config.validate() {
        return Err(abort(Phase::Initialization, e.to_string(), &transcript, vec![]));
    }
    if config.uses_rag() && kb.is_none() {
        return Err(abort(Phase::Initialization, "retrieval enabled but no knowledge base loaded".into(), &transcript, vec![]));
    }

    let settings = config.agent_settings();
    let ctx = AgentContext { gateway, knowledge_base: kb, templates, settings: &settings };

    log::info!("[{}] {}", case.case_id, Phase::TrialPreparation);
    let prep = (|| -> Result<(JudgeInstructions, CounselArgument, CounselArgument), (AgentError, Vec<AgentStatement>)> {
        let judge = agents::judge_instructions(case, &ctx).map_err(|e| (e, vec![]))?;
        let pros = agents::counsel_argument(Side::Prosecution, case, &ctx).map_err(|e| (e, vec![judge.0.clone()]))?;
        let def = agents::counsel_argument(Side::Defense, case, &ctx)
            .map_err(|e| (e, vec![judge.0.clone(), pros.statement.clone()]))?;
        Ok((judge, pros, def))
    })();
    let (instructions, prosecution, defense) = match prep {
        Ok(v) => v,
        Err((e, done)) => {
            transcript.preparation = done;
            return Err(abort(Phase::TrialPreparation, e.to_string(), &transcript, vec![]));
        }
    };
    transcript.preparation =
        vec![instructions.0.clone(), prosecution.statement.clone(), defense.statement.clone()];

    let mut verdict = None;
    for round in 1..=config.max_rounds {
        log::info!("[{}] {} round {round}", case.case_id, Phase::Deliberation);
        let prior: Vec<AgentStatement> = transcript.rounds.iter().flat_map(|r| r.statements.clone()).collect();
        let statements = match deliberate_round(round, case, &instructions, &prosecution, &defense, &prior, &ctx, config) {
            Ok(s) => s,
            Err((e, done)) => return Err(abort(Phase::Deliberation, e.to_string(), &transcript, done)),
        };

        let check = check_consensus(&statements, config.consensus_threshold, config.threshold_rule);
        log::info!(
            "[{}] {} round {round}: agreement {:.2}, modal {}, consensus {}",
            case.case_id,
            Phase::ConsensusCheck,
            check.agreement_ratio,
            check.modal_leaning.map(|l| l.to_string()).unwrap_or_else(|| "tie".into()),
            check.consensus
        );
        transcript.rounds.push(DeliberationRound { round, statements, consensus: check });
        if check.consensus {
            let outcome = match check.modal_leaning {
                Some(Leaning::Guilty) => Outcome::Guilty,
                Some(Leaning::NotGuilty) => Outcome::NotGuilty,
                _ => unreachable!("consensus implies a decided modal leaning"),
            };
            verdict = Some(Verdict { outcome, final_agreement_ratio: check.agreement_ratio, rounds_used: round });
            break;
        }
    }

    let verdict = match verdict {
        Some(v) => v,
        None => declare_hung(&transcript, config)
            .map_err(|e| abort(Phase::Conclusion, e.to_string(), &transcript, vec![]))?,
    };
    log::info!("[{}] {}: {} after {} round(s)", case.case_id, Phase::Conclusion, verdict.outcome, verdict.rounds_used);

    let calls = gateway.call_log();
    let metrics = metrics::summarize(&transcript, &calls, case, config)
        .map_err(|e| abort(Phase::Conclusion, e.to_string(), &transcript, vec![]))?;
    Ok(SimulationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        case_id: case.case_id.clone(),
        run_index: config.run_index,
        config: config.clone(),
        backend_id: gateway.backend_id(),
        template_set: templates.name().to_string(),
        case: case.clone(),
        verdict,
        transcript,
        metrics,
        timing: Timing {
            started_at: started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            wall_ms: clock.elapsed().as_secs_f64() * 1000.0,
            calls,
        },
    })
}

/// One deliberation round. On failure returns the statements that did complete.
#[allow(clippy::too_many_arguments)]
fn deliberate_round(
    round: u32,
    case: &CaseFile,
    instructions: &JudgeInstructions,
    prosecution: &CounselArgument,
    defense: &CounselArgument,
    prior: &[AgentStatement],
    ctx: &AgentContext<'_>,
    config: &SimulationConfig,
) -> Result<Vec<AgentStatement>, (AgentError, Vec<AgentStatement>)> {
    let ids: Vec<String> = (1..=config.num_adjudicators).map(|i| i.to_string()).collect();
    let call = |id: &str, visible: &[AgentStatement]| {
        let inputs = AdjudicatorInputs { instructions, prosecution, defense, prior: visible };
        agents::adjudicator_statement(id, round, case, &inputs, ctx)
    };

    let results: Vec<Result<AgentStatement, AgentError>> = if config.sequential_rounds {
        let mut visible = prior.to_vec();
        let mut out = Vec::with_capacity(ids.len());
        for id in &ids {
            let r = call(id, &visible);
            if let Ok(s) = &r {
                visible.push(s.clone());
            }
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    } else if config.parallel_adjudicators && ids.len() > 1 {
        thread::scope(|scope| {
            let handles: Vec<_> = ids.iter().map(|id| scope.spawn(move || call(id, prior))).collect();
            handles.into_iter().map(|h| h.join().expect("adjudicator thread panicked")).collect()
        })
    } else {
        ids.iter().map(|id| call(id, prior)).collect()
    };

    let mut done = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => done.push(s),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    match first_err {
        None => Ok(done),
        Some(e) => Err((e, done)),
    }
}
