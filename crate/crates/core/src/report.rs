//! Report persistence and rendering: JSON for machines, markdown for people.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::agents::AgentStatement;
use crate::orchestrator::{PartialRun, Phase, SimulationReport, REPORT_SCHEMA_VERSION};

/// Row labels of the per-case metric block, in display order.
pub const METRIC_LABELS: [&str; 9] = [
    "No. of Adjudicators",
    "RAG enabled (Judge)",
    "RAG enabled (Counsel)",
    "Final Verdict",
    "Deliberation Rounds",
    "Final Agreement Ratio",
    "Adjudicator Participation Rate",
    "Avg. Meaningful Statements per Adjudicator",
    "Avg. Argument Grounding Score",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is not a valid report: {reason}")]
    Invalid { path: PathBuf, reason: String },
    #[error("{0} already exists")]
    Exists(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

/// The nine metric rows as `(label, value)`.
pub fn metric_rows(report: &SimulationReport) -> Vec<(&'static str, String)> {
    let m = &report.metrics;
    let values = [
        report.config.num_adjudicators.to_string(),
        yes_no(report.config.rag_judge).to_string(),
        yes_no(report.config.rag_counsel).to_string(),
        report.verdict.outcome.to_string(),
        report.verdict.rounds_used.to_string(),
        format!("{:.2}", report.verdict.final_agreement_ratio),
        format!("{:.2}", m.mean_participation_rate),
        format!("{:.2}", m.avg_meaningful_per_adjudicator),
        format!("{:.2}", m.avg_grounding_score),
    ];
    METRIC_LABELS.into_iter().zip(values).collect()
}

pub fn render_metric_block(report: &SimulationReport) -> String {
    let mut out = String::from("| Metric | Value |\n|---|---|\n");
    for (label, value) in metric_rows(report) {
        let _ = writeln!(out, "| {label} | {value} |");
    }
    out
}

fn quote_block(text: &str) -> String {
    if text.trim().is_empty() {
        return "> (empty)\n".into();
    }
    text.trim().lines().map(|l| if l.is_empty() { ">\n".to_string() } else { format!("> {l}\n") }).collect()
}

fn statement_md(out: &mut String, heading: &str, s: &AgentStatement) {
    let _ = writeln!(out, "#### {heading}\n");
    if let Some(l) = s.leaning {
        let warn = if s.parse_warning { " (no LEANING line; defaulted)" } else { "" };
        let _ = writeln!(out, "Leaning: **{l}**{warn}\n");
    }
    out.push_str(&quote_block(&s.justification));
    if !s.citations.is_empty() {
        let cites: Vec<String> = s
            .citations
            .iter()
            .zip(&s.citation_validity)
            .map(|(c, ok)| format!("{} #{}{}", c.source_document, c.chunk_id, if *ok { "" } else { " (unverified)" }))
            .collect();
        let _ = writeln!(out, "\nCitations: {}", cites.join(", "));
    }
    out.push('\n');
}

pub fn render_markdown(report: &SimulationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Deliberation report: {} (run {})\n", report.case_id, report.run_index);
    let _ = writeln!(
        out,
        "Verdict: **{}** after {} round(s), agreement {:.2}.\n",
        report.verdict.outcome, report.verdict.rounds_used, report.verdict.final_agreement_ratio
    );
    out.push_str("## Metrics\n\n");
    out.push_str(&render_metric_block(report));

    let m = &report.metrics;
    let _ = writeln!(
        out,
        "\nLatency (ms): mean {:.1}, median {:.1}, min {:.1}, max {:.1} over {} call(s).",
        m.latency.mean, m.latency.median, m.latency.min, m.latency.max, m.latency.count
    );
    let _ = writeln!(
        out,
        "Statements: {} adjudicator, {} meaningful, {} without a parsable leaning. Citations: {} valid of {}.\n",
        m.total_statements, m.meaningful_statements, m.parse_warnings, m.citations_valid, m.citations_total
    );

    let c = &report.config;
    out.push_str("## Configuration\n\n");
    let _ = writeln!(
        out,
        "model `{}`, backend `{}`, temperature {}, k {}, threshold {} ({}), max rounds {}, seed {}, templates `{}`\n",
        c.model_id,
        report.backend_id,
        c.temperature,
        c.retrieval_k,
        c.consensus_threshold,
        c.threshold_rule,
        c.max_rounds,
        c.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()),
        report.template_set
    );

    out.push_str("## Case\n\n");
    let _ = writeln!(out, "{}\n", report.case.summary.trim());
    let _ = writeln!(out, "Charges: {}\n", report.case.charges.join("; "));

    out.push_str("## Trial preparation\n\n");
    let titles = ["Judge's instructions", "Prosecution argument", "Defense argument"];
    for (s, title) in report.transcript.preparation.iter().zip(titles) {
        statement_md(&mut out, title, s);
    }

    for round in &report.transcript.rounds {
        let modal = round.consensus.modal_leaning.map(|l| l.to_string()).unwrap_or_else(|| "tie".into());
        let _ = writeln!(
            out,
            "## Round {}\n\nAgreement {:.2} (modal: {modal}), consensus: {}.\n",
            round.round,
            round.consensus.agreement_ratio,
            yes_no(round.consensus.consensus)
        );
        for s in &round.statements {
            statement_md(&mut out, &format!("Adjudicator {}", s.agent_id), s);
        }
    }
    out
}

/// `{case_id}_{run_index}_{timestamp}`, timestamp as `YYYYMMDDTHHMMSSmmmZ`.
pub fn file_stem(case_id: &str, run_index: u32, started_at: &str) -> String {
    let ts: String = started_at.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    let safe_id: String =
        case_id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '-' }).collect();
    format!("{safe_id}_{run_index}_{ts}")
}

pub fn to_json(report: &SimulationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialises")
}

#[derive(Debug, Clone)]
pub struct WrittenReport {
    pub json: PathBuf,
    pub markdown: PathBuf,
}

/// Writes `<stem>.json` and `<stem>.md` into `out_dir`.
pub fn write_report(report: &SimulationReport, out_dir: &Path) -> Result<WrittenReport, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let stem = file_stem(&report.case_id, report.run_index, &report.timing.started_at);
    let json = out_dir.join(format!("{stem}.json"));
    let markdown = out_dir.join(format!("{stem}.md"));
    if json.exists() {
        return Err(ReportError::Exists(json));
    }
    fs::write(&json, to_json(report) + "\n").map_err(io_err(&json))?;
    fs::write(&markdown, render_markdown(report)).map_err(io_err(&markdown))?;
    Ok(WrittenReport { json, markdown })
}

/// Persists what an aborted run produced as `<stem>.aborted.json`.
pub fn write_partial(partial: &PartialRun, phase: Phase, cause: &str, out_dir: &Path) -> Result<PathBuf, ReportError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let stem = file_stem(&partial.case_id, partial.config.run_index, &partial.timing.started_at);
    let path = out_dir.join(format!("{stem}.aborted.json"));
    let doc = serde_json::json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "status": "aborted",
        "phase": phase,
        "cause": cause,
        "partial": partial,
    });
    fs::write(&path, serde_json::to_string_pretty(&doc).expect("serialises") + "\n").map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_report(path: &Path) -> Result<SimulationReport, ReportError> {
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    let value: Value = serde_json::from_str(&raw)
        .map_err(|e| ReportError::Invalid { path: path.to_path_buf(), reason: e.to_string() })?;
    validate_report_json(&value)
        .map_err(|problems| ReportError::Invalid { path: path.to_path_buf(), reason: problems.join("; ") })?;
    serde_json::from_value(value).map_err(|e| ReportError::Invalid { path: path.to_path_buf(), reason: e.to_string() })
}

/// Removes wall-clock data: the `timing` section, every statement's
/// `latency_ms` and the latency stats in `metrics`.
pub fn mask_volatile(report: &Value) -> Value {
    let mut v = report.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
        if let Some(m) = obj.get_mut("metrics").and_then(Value::as_object_mut) {
            m.insert("latency".into(), Value::Null);
        }
    }
    let statements = v
        .pointer_mut("/transcript/preparation")
        .and_then(Value::as_array_mut)
        .map(|a| a.iter_mut().collect::<Vec<_>>())
        .unwrap_or_default();
    for s in statements {
        s["latency_ms"] = Value::Null;
    }
    if let Some(rounds) = v.pointer_mut("/transcript/rounds").and_then(Value::as_array_mut) {
        for r in rounds {
            if let Some(stmts) = r.get_mut("statements").and_then(Value::as_array_mut) {
                for s in stmts {
                    s["latency_ms"] = Value::Null;
                }
            }
        }
    }
    v
}

/// Canonical masked JSON text of a report.
pub fn masked_json(report: &SimulationReport) -> String {
    let value = serde_json::to_value(report).expect("report serialises");
    serde_json::to_string_pretty(&mask_volatile(&value)).expect("serialises")
}

fn unit_interval(x: Option<f64>) -> bool {
    matches!(x, Some(v) if (0.0..=1.0).contains(&v))
}

/// Structural checks on a report document. Returns every problem found.
pub fn validate_report_json(v: &Value) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    let mut need = |cond: bool, msg: String| {
        if !cond {
            problems.push(msg);
        }
    };

    for key in
        ["schema_version", "case_id", "run_index", "config", "backend_id", "case", "verdict", "transcript", "metrics", "timing"]
    {
        need(v.get(key).is_some(), format!("missing `{key}`"));
    }
    need(
        v["schema_version"].as_u64() == Some(REPORT_SCHEMA_VERSION as u64),
        format!("schema_version must be {REPORT_SCHEMA_VERSION}"),
    );
    need(v["case_id"].as_str().is_some_and(|s| !s.is_empty()), "case_id must be a non-empty string".into());
    need(v["case"]["case_id"] == v["case_id"], "case.case_id differs from case_id".into());

    let cfg = &v["config"];
    let n = cfg["num_adjudicators"].as_u64().unwrap_or(0);
    let max_rounds = cfg["max_rounds"].as_u64().unwrap_or(0);
    need(n >= 1, "config.num_adjudicators must be >= 1".into());
    need(max_rounds >= 1, "config.max_rounds must be >= 1".into());
    need(
        cfg["consensus_threshold"].as_f64().is_some_and(|t| t > 0.0 && t <= 1.0),
        "config.consensus_threshold outside (0, 1]".into(),
    );
    need(cfg["rag_judge"].is_boolean() && cfg["rag_counsel"].is_boolean(), "config RAG flags must be booleans".into());

    let verdict = &v["verdict"];
    let outcome = verdict["outcome"].as_str();
    need(
        matches!(outcome, Some("guilty" | "not_guilty" | "hung")),
        format!("verdict.outcome {:?} is not guilty/not_guilty/hung", verdict["outcome"]),
    );
    need(unit_interval(verdict["final_agreement_ratio"].as_f64()), "verdict.final_agreement_ratio outside [0, 1]".into());
    let rounds_used = verdict["rounds_used"].as_u64().unwrap_or(0);
    need((1..=max_rounds.max(1)).contains(&rounds_used), format!("verdict.rounds_used {rounds_used} outside [1, max_rounds]"));
    if outcome == Some("hung") {
        need(rounds_used == max_rounds, "hung verdict before max_rounds".into());
    }

    let check_statement = |s: &Value, where_: &str, problems: &mut Vec<String>| {
        let cites = s["citations"].as_array().map(Vec::len);
        let validity = s["citation_validity"].as_array();
        if cites.is_none() || validity.map(Vec::len) != cites {
            problems.push(format!("{where_}: citations and citation_validity differ in length"));
        }
        if validity.is_some_and(|a| a.iter().any(|b| !b.is_boolean())) {
            problems.push(format!("{where_}: citation_validity must hold booleans"));
        }
        if !s["justification"].is_string() {
            problems.push(format!("{where_}: justification must be a string"));
        }
    };

    let prep = v["transcript"]["preparation"].as_array();
    need(prep.map(Vec::len) == Some(3), "transcript.preparation must hold 3 statements".into());
    for (i, s) in prep.into_iter().flatten().enumerate() {
        check_statement(s, &format!("preparation[{i}]"), &mut problems);
    }
    let rounds = v["transcript"]["rounds"].as_array();
    if let Some(rounds) = rounds {
        if rounds.len() as u64 != rounds_used {
            problems.push(format!("{} rounds recorded but rounds_used is {rounds_used}", rounds.len()));
        }
        for (i, r) in rounds.iter().enumerate() {
            if r["round"].as_u64() != Some(i as u64 + 1) {
                problems.push(format!("rounds[{i}] has round {:?}, expected {}", r["round"], i + 1));
            }
            let stmts = r["statements"].as_array().map(Vec::as_slice).unwrap_or_default();
            if stmts.len() as u64 != n {
                problems.push(format!("round {} has {} statements for {n} adjudicators", i + 1, stmts.len()));
            }
            let mut ids: Vec<&str> = stmts.iter().filter_map(|s| s["agent_id"].as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            if ids.len() != stmts.len() {
                problems.push(format!("round {} repeats an adjudicator", i + 1));
            }
            for (j, s) in stmts.iter().enumerate() {
                check_statement(s, &format!("rounds[{i}].statements[{j}]"), &mut problems);
                if !matches!(s["leaning"].as_str(), Some("guilty" | "not_guilty" | "undecided")) {
                    problems.push(format!("rounds[{i}].statements[{j}]: missing leaning"));
                }
            }
            if !unit_interval(r["consensus"]["agreement_ratio"].as_f64()) {
                problems.push(format!("rounds[{i}].consensus.agreement_ratio outside [0, 1]"));
            }
        }
    } else {
        problems.push("transcript.rounds must be an array".into());
    }

    let m = &v["metrics"];
    let total = m["total_statements"].as_u64();
    let meaningful = m["meaningful_statements"].as_u64();
    if total.zip(meaningful).is_none_or(|(t, k)| k > t) {
        problems.push("metrics: meaningful_statements must be <= total_statements".into());
    }
    if !unit_interval(m["avg_grounding_score"].as_f64()) {
        problems.push("metrics.avg_grounding_score outside [0, 1]".into());
    }
    let rates = m["participation_rate_per_round"].as_array();
    if rates.is_none_or(|a| a.iter().any(|x| !unit_interval(x.as_f64()))) {
        problems.push("metrics.participation_rate_per_round must hold values in [0, 1]".into());
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}
