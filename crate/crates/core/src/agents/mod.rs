//! Role agents: Judge, Prosecution and Defense Counsel, and Adjudicators.
//!
//! Agents are stateless. Each call builds a prompt from a template, runs
//! retrieval when enabled for its role, calls the gateway and parses the
//! response into an [`AgentStatement`].
//!
//! Output contract: adjudicators answer with `LEANING:` and
//! `JUSTIFICATION:` labelled lines; RAG-enabled agents cite retrieved chunks
//! as `[Source: <doc>, chunk <id>]`.

mod parse;
pub mod templates;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case_model::CaseFile;
use crate::knowledge_base::{self, format_context, Embedder, KbError, RetrievalResult, VectorStore};
use crate::llm_gateway::{CallTag, Gateway, GatewayError, GenerationRequest};

pub use parse::{
    check_citations, extract_citations, extract_justification, find_citations, offered_citations,
    parse_leaning,
};
pub use templates::{TemplateError, TemplateSet};

const LAW_HEAD_CHARS: usize = 300;
const EVIDENCE_HEAD_CHARS: usize = 120;
pub const NO_PRIOR_STATEMENTS: &str = "(no prior statements)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leaning {
    Guilty,
    NotGuilty,
    Undecided,
}

impl Leaning {
    pub const ALL: [Leaning; 3] = [Leaning::Guilty, Leaning::NotGuilty, Leaning::Undecided];
}

impl fmt::Display for Leaning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Leaning::Guilty => "Guilty",
            Leaning::NotGuilty => "Not Guilty",
            Leaning::Undecided => "Undecided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Judge,
    Prosecution,
    Defense,
    Adjudicator,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Judge => "judge",
            Role::Prosecution => "prosecution",
            Role::Defense => "defense",
            Role::Adjudicator => "adjudicator",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Prosecution,
    Defense,
}

impl Side {
    pub fn role(self) -> Role {
        match self {
            Side::Prosecution => Role::Prosecution,
            Side::Defense => Role::Defense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Citation {
    pub source_document: String,
    pub chunk_id: u64,
}

impl fmt::Display for Citation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&knowledge_base::source_marker(&self.source_document, self.chunk_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStatement {
    pub agent_id: String,
    pub role: Role,
    /// 0 for the preparation phase.
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaning: Option<Leaning>,
    pub justification: String,
    pub citations: Vec<Citation>,
    pub citation_validity: Vec<bool>,
    /// Chunks this agent could legitimately cite.
    #[serde(default)]
    pub context_offered: Vec<Citation>,
    pub latency_ms: f64,
    pub parse_warning: bool,
    pub response_text: String,
}

impl AgentStatement {
    pub fn valid_citations(&self) -> impl Iterator<Item = &Citation> {
        self.citations.iter().zip(&self.citation_validity).filter(|(_, v)| **v).map(|(c, _)| c)
    }

    pub fn valid_citation_count(&self) -> usize {
        self.citation_validity.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JudgeInstructions(pub AgentStatement);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounselArgument {
    pub side: Side,
    pub statement: AgentStatement,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] KbError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("retrieval is enabled for {0} but no knowledge base was supplied")]
    MissingKnowledgeBase(Role),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Generation and retrieval settings shared by every agent call in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub retrieval_k: usize,
    pub rag_judge: bool,
    pub rag_counsel: bool,
    pub num_adjudicators: usize,
    /// Adjudicators also see earlier same-round statements.
    pub sequential_rounds: bool,
    pub run_index: u32,
}

/// Everything an agent call needs besides the case.
pub struct AgentContext<'a> {
    pub gateway: &'a Gateway,
    pub knowledge_base: Option<(&'a VectorStore, &'a dyn Embedder)>,
    pub templates: &'a TemplateSet,
    pub settings: &'a AgentSettings,
}

fn head(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

/// Deterministic retrieval query for a role.
///
/// The Judge (and any adjudicator) query is the charges plus the head of the
/// law explanation; counsel queries are the charges plus the heads of that
/// side's evidence items.
pub fn build_rag_query(role: Role, case: &CaseFile) -> String {
    let charges = case.charges.join("; ");
    let evidence = |items: &[String]| {
        items.iter().map(|e| head(e.trim(), EVIDENCE_HEAD_CHARS)).collect::<Vec<_>>().join("; ")
    };
    let tail = match role {
        Role::Prosecution => evidence(&case.prosecution_evidence),
        Role::Defense => evidence(&case.defense_evidence),
        Role::Judge | Role::Adjudicator => head(case.law_explanation.trim(), LAW_HEAD_CHARS).to_string(),
    };
    if tail.is_empty() {
        charges
    } else {
        format!("{charges}\n{tail}")
    }
}

fn bullet_list(items: &[String]) -> String {
    if items.is_empty() {
        return "(none)".into();
    }
    items.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n")
}

fn citation_rule(rag: bool) -> &'static str {
    if rag {
        "Ground your text in the retrieved legal context. Cite every provision you rely on in \
         exactly the form [Source: <document>, chunk <id>], copied from the context block \
         headers. Do not cite anything that is not in the context."
    } else {
        "No legal context was retrieved. Do not invent citations."
    }
}

fn retrieve(
    role: Role,
    rag: bool,
    case: &CaseFile,
    ctx: &AgentContext<'_>,
) -> Result<Vec<RetrievalResult>, AgentError> {
    if !rag {
        return Ok(Vec::new());
    }
    let (store, embedder) = ctx.knowledge_base.ok_or(AgentError::MissingKnowledgeBase(role))?;
    Ok(knowledge_base::query(store, &build_rag_query(role, case), ctx.settings.retrieval_k, embedder)?)
}

fn base_vars(case: &CaseFile) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("case_id", case.case_id.clone()),
        ("summary", case.summary.clone()),
        ("charges", bullet_list(&case.charges)),
        ("law_explanation", case.law_explanation.clone()),
        ("prosecution_evidence", bullet_list(&case.prosecution_evidence)),
        ("defense_evidence", bullet_list(&case.defense_evidence)),
    ])
}

fn request(ctx: &AgentContext<'_>, system: String, user: String, tag: CallTag) -> GenerationRequest {
    GenerationRequest {
        system_prompt: system,
        user_prompt: user,
        model_id: ctx.settings.model_id.clone(),
        temperature: ctx.settings.temperature,
        max_tokens: ctx.settings.max_tokens,
        seed: ctx.settings.seed,
        tag: tag.with_run(ctx.settings.run_index),
    }
}

/// Prompts for the Judge, exposed so callers can inspect or log them.
pub fn judge_prompts(
    case: &CaseFile,
    context: &[RetrievalResult],
    rag: bool,
    templates: &TemplateSet,
) -> Result<(String, String), TemplateError> {
    let mut vars = base_vars(case);
    vars.insert("context", format_context(context));
    vars.insert("citation_rule", citation_rule(rag).into());
    Ok((templates.render(templates::JUDGE_SYSTEM, &vars)?, templates.render(templates::JUDGE_USER, &vars)?))
}

pub fn counsel_prompts(
    side: Side,
    case: &CaseFile,
    context: &[RetrievalResult],
    rag: bool,
    templates: &TemplateSet,
) -> Result<(String, String), TemplateError> {
    let mut vars = base_vars(case);
    let (title, goal, own, other) = match side {
        Side::Prosecution => (
            "the Prosecution Counsel",
            "Argue that every element of the charges is proven beyond reasonable doubt.",
            &case.prosecution_evidence,
            &case.defense_evidence,
        ),
        Side::Defense => (
            "the Defense Counsel",
            "Argue that the prosecution has not proven the charges and that reasonable doubt remains.",
            &case.defense_evidence,
            &case.prosecution_evidence,
        ),
    };
    vars.insert("side_title", title.into());
    vars.insert("side_goal", goal.into());
    vars.insert("own_evidence", bullet_list(own));
    vars.insert("other_evidence", bullet_list(other));
    vars.insert("context", format_context(context));
    vars.insert("citation_rule", citation_rule(rag).into());
    Ok((templates.render(templates::COUNSEL_SYSTEM, &vars)?, templates.render(templates::COUNSEL_USER, &vars)?))
}

fn preparation_statement(
    role: Role,
    text: String,
    latency_ms: f64,
    context: &[RetrievalResult],
) -> AgentStatement {
    let (citations, citation_validity) = extract_citations(&text, context);
    AgentStatement {
        agent_id: role.as_str().to_string(),
        role,
        round: 0,
        leaning: None,
        justification: text.trim().to_string(),
        citations,
        citation_validity,
        context_offered: offered_citations(context),
        latency_ms,
        parse_warning: false,
        response_text: text,
    }
}

pub fn judge_instructions(case: &CaseFile, ctx: &AgentContext<'_>) -> Result<JudgeInstructions, AgentError> {
    let rag = ctx.settings.rag_judge;
    let context = retrieve(Role::Judge, rag, case, ctx)?;
    let (system, user) = judge_prompts(case, &context, rag, ctx.templates)?;
    let resp = ctx.gateway.generate(&request(ctx, system, user, CallTag::new("judge", "judge", 0)))?;
    Ok(JudgeInstructions(preparation_statement(Role::Judge, resp.text, resp.latency_ms, &context)))
}

pub fn counsel_argument(side: Side, case: &CaseFile, ctx: &AgentContext<'_>) -> Result<CounselArgument, AgentError> {
    let role = side.role();
    let rag = ctx.settings.rag_counsel;
    let context = retrieve(role, rag, case, ctx)?;
    let (system, user) = counsel_prompts(side, case, &context, rag, ctx.templates)?;
    let tag = CallTag::new(role.as_str(), role.as_str(), 0);
    let resp = ctx.gateway.generate(&request(ctx, system, user, tag))?;
    Ok(CounselArgument { side, statement: preparation_statement(role, resp.text, resp.latency_ms, &context) })
}

/// Prior statements as shown to an adjudicator.
pub fn format_peer_statements(prior: &[AgentStatement], viewer_id: &str) -> String {
    if prior.is_empty() {
        return NO_PRIOR_STATEMENTS.to_string();
    }
    prior
        .iter()
        .map(|s| {
            let who = if s.agent_id == viewer_id { " (you)" } else { "" };
            let leaning = s.leaning.map(|l| l.to_string()).unwrap_or_else(|| "no position".into());
            format!("Adjudicator {}{who}, round {}, leaned {leaning}:\n{}", s.agent_id, s.round, s.justification)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub struct AdjudicatorInputs<'a> {
    pub instructions: &'a JudgeInstructions,
    pub prosecution: &'a CounselArgument,
    pub defense: &'a CounselArgument,
    /// Statements visible to this adjudicator, in transcript order.
    pub prior: &'a [AgentStatement],
}

pub fn adjudicator_prompts(
    agent_id: &str,
    round: u32,
    case: &CaseFile,
    inputs: &AdjudicatorInputs<'_>,
    num_adjudicators: usize,
    templates: &TemplateSet,
) -> Result<(String, String), TemplateError> {
    let mut vars = base_vars(case);
    vars.insert("agent_id", agent_id.to_string());
    vars.insert("num_adjudicators", num_adjudicators.to_string());
    vars.insert("round", round.to_string());
    vars.insert("instructions", inputs.instructions.0.justification.clone());
    vars.insert("prosecution_argument", inputs.prosecution.statement.justification.clone());
    vars.insert("defense_argument", inputs.defense.statement.justification.clone());
    vars.insert("peer_statements", format_peer_statements(inputs.prior, agent_id));
    Ok((
        templates.render(templates::ADJUDICATOR_SYSTEM, &vars)?,
        templates.render(templates::ADJUDICATOR_USER, &vars)?,
    ))
}

/// Chunks an adjudicator may cite: those validly cited in the instructions
/// and arguments it was shown.
fn adjudicator_offered(inputs: &AdjudicatorInputs<'_>) -> Vec<Citation> {
    let mut seen = HashSet::new();
    [&inputs.instructions.0, &inputs.prosecution.statement, &inputs.defense.statement]
        .into_iter()
        .flat_map(|s| s.valid_citations())
        .filter(|c| seen.insert((*c).clone()))
        .cloned()
        .collect()
}

pub fn adjudicator_statement(
    agent_id: &str,
    round: u32,
    case: &CaseFile,
    inputs: &AdjudicatorInputs<'_>,
    ctx: &AgentContext<'_>,
) -> Result<AgentStatement, AgentError> {
    if round == 0 {
        return Err(AgentError::Precondition("deliberation rounds start at 1".into()));
    }
    let visible = |s: &AgentStatement| {
        s.round < round || (ctx.settings.sequential_rounds && s.round == round && s.agent_id != agent_id)
    };
    if let Some(bad) = inputs.prior.iter().find(|s| !visible(s)) {
        return Err(AgentError::Precondition(format!(
            "adjudicator {agent_id} in round {round} cannot see statement from {} in round {}",
            bad.agent_id, bad.round
        )));
    }

    let (system, user) =
        adjudicator_prompts(agent_id, round, case, inputs, ctx.settings.num_adjudicators, ctx.templates)?;
    let tag = CallTag::new("adjudicator", agent_id, round);
    let resp = ctx.gateway.generate(&request(ctx, system, user, tag))?;

    let (leaning, parse_warning) = parse_leaning(&resp.text);
    if parse_warning {
        log::warn!("adjudicator {agent_id} round {round}: no LEANING line, recorded as Undecided");
    }
    let offered = adjudicator_offered(inputs);
    let (citations, citation_validity) = check_citations(&resp.text, &offered);
    Ok(AgentStatement {
        agent_id: agent_id.to_string(),
        role: Role::Adjudicator,
        round,
        leaning: Some(leaning),
        justification: extract_justification(&resp.text),
        citations,
        citation_validity,
        context_offered: offered,
        latency_ms: resp.latency_ms,
        parse_warning,
        response_text: resp.text,
    })
}
