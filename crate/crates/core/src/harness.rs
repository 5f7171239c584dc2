//! Replication and ablation drivers on top of [`run_simulation`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::TemplateSet;
use crate::case_model::CaseFile;
use crate::knowledge_base::{Embedder, HashEmbedder, StoreManifest};
use crate::llm_gateway::{Backend, Gateway, GatewayEmbedder, MockBackend, MockScript};
use crate::metrics::{consistency, ConsistencySummary, MetricsError, RunOutcome};
use crate::orchestrator::{run_simulation, KnowledgeBase, RunAborted, SimulationConfig, SimulationReport};

/// Embedder matching the identity recorded in a store manifest.
pub fn embedder_for_store(manifest: &StoreManifest, gateway: Option<Arc<Gateway>>) -> Result<Box<dyn Embedder>, String> {
    if let Some(h) = HashEmbedder::from_identity(&manifest.embedder) {
        return Ok(Box::new(h));
    }
    if let Some(model) = GatewayEmbedder::model_from_identity(&manifest.embedder) {
        let gateway = gateway.ok_or_else(|| format!("store embedder `{}` needs a remote backend", manifest.embedder))?;
        return Ok(Box::new(GatewayEmbedder::new(gateway, model)));
    }
    Err(format!("unknown store embedder `{}`", manifest.embedder))
}

/// Runs `runs` replicates of one case. Run `i` gets `run_index = i` and,
/// when a seed is set, seed `seed + i`. Each run has its own gateway so call
/// logs stay per run.
pub fn replicate(
    base: &SimulationConfig,
    runs: usize,
    case: &CaseFile,
    kb: Option<KnowledgeBase<'_>>,
    backend: &Arc<dyn Backend>,
    templates: &TemplateSet,
    parallel: bool,
) -> Vec<Result<SimulationReport, RunAborted>> {
    let one = |i: usize| {
        let config = SimulationConfig {
            run_index: i as u32,
            seed: base.seed.map(|s| s.wrapping_add(i as u64)),
            ..base.clone()
        };
        let gateway = Gateway::new(Arc::clone(backend));
        run_simulation(&config, case, kb, &gateway, templates)
    };
    if parallel {
        (0..runs).into_par_iter().map(one).collect()
    } else {
        (0..runs).map(one).collect()
    }
}

pub fn run_outcome(result: &Result<SimulationReport, RunAborted>) -> RunOutcome {
    match result {
        Ok(r) => r.verdict.outcome.into(),
        Err(_) => RunOutcome::Aborted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_index: u32,
    pub outcome: RunOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Contents of `consistency.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub case_id: String,
    #[serde(flatten)]
    pub consistency: ConsistencySummary,
    pub run_entries: Vec<RunEntry>,
}

pub fn write_consistency(summary: &ReplicationSummary, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(summary).expect("serialises") + "\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub models: Vec<String>,
    /// `(rag_judge, rag_counsel)` per column of the matrix.
    pub rag_pairs: Vec<(bool, bool)>,
    pub runs_per_cell: usize,
    pub case_path: PathBuf,
    pub base: SimulationConfig,
}

impl AblationSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.models.is_empty() {
            return Err("ablation needs at least one model".into());
        }
        if self.rag_pairs.is_empty() {
            return Err("ablation needs at least one RAG setting".into());
        }
        if self.runs_per_cell == 0 {
            return Err("runs per cell must be at least 1".into());
        }
        if self.models.iter().any(|m| m.trim().is_empty()) {
            return Err("model ids must be non-empty".into());
        }
        Ok(())
    }

    /// Cells in row order: models outermost, RAG pairs in the given order.
    pub fn cells(&self) -> Vec<(String, bool, bool)> {
        self.models
            .iter()
            .flat_map(|m| self.rag_pairs.iter().map(move |&(j, c)| (m.clone(), j, c)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub runs: usize,
    pub completed_runs: usize,
    pub mean_agreement: f64,
    pub mean_grounding: f64,
    pub mean_meaningful_per_adjudicator: f64,
    pub consistency: ConsistencySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub model: String,
    pub rag_judge: bool,
    pub rag_counsel: bool,
    pub result: Result<CellSummary, String>,
}

/// Aggregates one cell's runs. Means are over completed runs; aborted runs
/// only enter the consistency distribution.
pub fn summarize_cell(results: &[Result<SimulationReport, RunAborted>]) -> Result<CellSummary, String> {
    let outcomes: Vec<RunOutcome> = results.iter().map(run_outcome).collect();
    let consistency = consistency(&outcomes).map_err(|e: MetricsError| e.to_string())?;
    let done: Vec<&SimulationReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    if done.is_empty() {
        let first = results.iter().find_map(|r| r.as_ref().err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(format!("all runs aborted: {first}"));
    }
    let mean = |f: fn(&SimulationReport) -> f64| done.iter().map(|r| f(r)).sum::<f64>() / done.len() as f64;
    Ok(CellSummary {
        runs: results.len(),
        completed_runs: done.len(),
        mean_agreement: mean(|r| r.verdict.final_agreement_ratio),
        mean_grounding: mean(|r| r.metrics.avg_grounding_score),
        mean_meaningful_per_adjudicator: mean(|r| r.metrics.avg_meaningful_per_adjudicator),
        consistency,
    })
}

/// Backend for one cell, keyed by model and RAG setting.
pub type BackendFactory<'a> = dyn Fn(&str, bool, bool) -> Result<Arc<dyn Backend>, String> + Sync + 'a;

pub type CellObserver<'a> = dyn Fn(&AblationCell, &[Result<SimulationReport, RunAborted>]) + Sync + 'a;

/// Runs every cell, up to `jobs` cells at a time. Runs within a cell are
/// sequential. Each finished cell is also passed to `on_cell` with its reports.
pub fn run_ablation(
    spec: &AblationSpec,
    case: &CaseFile,
    kb: Option<KnowledgeBase<'_>>,
    backend_for: &BackendFactory<'_>,
    templates: &TemplateSet,
    jobs: usize,
    on_cell: &CellObserver<'_>,
) -> Vec<AblationCell> {
    let cell = |(model, rag_judge, rag_counsel): &(String, bool, bool)| {
        let config = SimulationConfig {
            model_id: model.clone(),
            rag_judge: *rag_judge,
            rag_counsel: *rag_counsel,
            ..spec.base.clone()
        };
        let (result, reports) = if config.uses_rag() && kb.is_none() {
            (Err("retrieval enabled but no knowledge base loaded".to_string()), vec![])
        } else {
            match backend_for(model, *rag_judge, *rag_counsel) {
                Err(e) => (Err(e), vec![]),
                Ok(backend) => {
                    let reports = replicate(&config, spec.runs_per_cell, case, kb, &backend, templates, false);
                    (summarize_cell(&reports), reports)
                }
            }
        };
        let cell = AblationCell { model: model.clone(), rag_judge: *rag_judge, rag_counsel: *rag_counsel, result };
        if let Err(e) = &cell.result {
            log::error!("cell {model} rag_judge={rag_judge} rag_counsel={rag_counsel}: {e}");
        }
        on_cell(&cell, &reports);
        cell
    };

    let cells = spec.cells();
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| cells.par_iter().map(cell).collect()),
        Err(e) => {
            log::warn!("cannot build a {jobs}-thread pool ({e}); running cells sequentially");
            cells.iter().map(cell).collect()
        }
    }
}

pub const ABLATION_COLUMNS: [&str; 7] =
    ["Model", "RAG (Judge)", "RAG (Counsel)", "Agreement", "Ground Score", "Avg. Stmts.", "Consistency"];

pub fn render_ablation_table(cells: &[AblationCell]) -> String {
    let yes_no = |b: bool| if b { "Yes" } else { "No" };
    let mut out = format!("| {} |\n|{}\n", ABLATION_COLUMNS.join(" | "), "---|".repeat(ABLATION_COLUMNS.len()));
    for c in cells {
        let (agreement, grounding, stmts, consistency) = match &c.result {
            Ok(s) => (
                format!("{:.2}", s.mean_agreement),
                format!("{:.2}", s.mean_grounding),
                format!("{:.2}", s.mean_meaningful_per_adjudicator),
                format!("{} ({:.2})", s.consistency.label, s.consistency.consistency_rate),
            ),
            Err(_) => ("ERROR".into(), "ERROR".into(), "ERROR".into(), "ERROR".into()),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {agreement} | {grounding} | {stmts} | {consistency} |",
            c.model,
            yes_no(c.rag_judge),
            yes_no(c.rag_counsel)
        );
    }
    out
}

/// Script file for one ablation cell under `root`:
/// `{model}/rag.json` when both roles retrieve, `{model}/norag.json` when
/// neither does, and `rag_judge.json` or `rag_counsel.json` for mixed cells
/// (falling back to `rag.json`).
pub fn mock_script_path(root: &Path, model: &str, rag_judge: bool, rag_counsel: bool) -> PathBuf {
    let dir = root.join(model);
    let name = match (rag_judge, rag_counsel) {
        (true, true) => "rag",
        (false, false) => "norag",
        (true, false) => "rag_judge",
        (false, true) => "rag_counsel",
    };
    let path = dir.join(format!("{name}.json"));
    if !path.exists() && rag_judge != rag_counsel {
        return dir.join("rag.json");
    }
    path
}

/// Backend factory reading mock scripts from `root` by the convention of [`mock_script_path`].
pub fn mock_backend_factory(root: PathBuf) -> impl Fn(&str, bool, bool) -> Result<Arc<dyn Backend>, String> + Sync {
    move |model, rag_judge, rag_counsel| {
        let path = mock_script_path(&root, model, rag_judge, rag_counsel);
        let script = MockScript::load(&path).map_err(|e| e.to_string())?;
        Ok(Arc::new(MockBackend::new(script)) as Arc<dyn Backend>)
    }
}

/// Outcome counts keyed by display label, for printing.
pub fn distribution_labels(summary: &ConsistencySummary) -> BTreeMap<String, usize> {
    summary.verdict_distribution.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}
