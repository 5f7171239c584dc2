//! `deliberate` command-line front end.
//!
//! Exit codes: 0 success (a hung panel is a success), 1 a run aborted,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use deliberate_core::agents::TemplateSet;
use deliberate_core::case_model::{load_case, validate_case, CaseFile};
use deliberate_core::harness::{
    self, embedder_for_store, mock_backend_factory, render_ablation_table, AblationSpec, ReplicationSummary, RunEntry,
};
use deliberate_core::knowledge_base::{
    build_store, load_store, persist_store, read_corpus_dir, ChunkParams, Embedder, HashEmbedder, VectorStore,
    DEFAULT_CHUNK_SIZE, DEFAULT_HASH_DIMENSION, DEFAULT_OVERLAP,
};
use deliberate_core::llm_gateway::{
    Backend, Gateway, GatewayEmbedder, HttpBackend, HttpConfig, MockBackend, MockScript, ENV_API_KEY, ENV_BASE_URL,
    ENV_EMBED_MODEL,
};
use deliberate_core::metrics::consistency;
use deliberate_core::orchestrator::{run_simulation, SimulationConfig, ThresholdRule};
use deliberate_core::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn run(message: impl Into<String>) -> Self {
        Self { code: EXIT_RUN_FAILED, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "deliberate", version, about = "Multi-agent courtroom deliberation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk and embed a directory of .txt statutes into a vector store.
    Ingest(IngestArgs),
    /// Simulate one case.
    Run(RunArgs),
    /// Simulate one case several times and report verdict consistency.
    Replicate(ReplicateArgs),
    /// Run a model x retrieval-setting matrix and render a comparison table.
    Ablate(AblateArgs),
    /// Re-render a markdown report from a report JSON file.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    /// Offline hashed bag-of-words.
    Hash,
    /// The remote backend's embeddings endpoint (model from EMBED_MODEL_ID).
    Remote,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: usize,
    #[arg(long, value_enum, default_value_t = EmbedderKind::Hash)]
    pub embedder: EmbedderKind,
    /// Dimension of the hash embedder.
    #[arg(long, default_value_t = DEFAULT_HASH_DIMENSION)]
    pub dimension: usize,
    /// Replace an existing store.
    #[arg(long)]
    pub force: bool,
}

/// Simulation settings shared by run, replicate and ablate.
#[derive(Debug, Args, Default, Clone)]
pub struct SimArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// TOML file with simulation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub adjudicators: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = parse_rule)]
    pub threshold_rule: Option<ThresholdRule>,
    #[arg(long)]
    pub max_rounds: Option<u32>,
    #[arg(long)]
    pub rag_judge: bool,
    #[arg(long)]
    pub rag_counsel: bool,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adjudicators in a round also see earlier statements from that round.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, default_value = "reports")]
    pub out_dir: PathBuf,
}

fn parse_rule(s: &str) -> Result<ThresholdRule, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 0)]
    pub run_index: u32,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub runs: usize,
    /// Run replicates concurrently.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Model ids, comma separated or repeated.
    #[arg(long = "models", value_delimiter = ',')]
    pub models: Vec<String>,
    /// Retrieval settings: both, none, judge, counsel. Defaults to both,none.
    #[arg(long = "rag", value_delimiter = ',')]
    pub rag: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Root of per-cell mock scripts laid out as `{model}/{rag|norag}.json`.
    #[arg(long)]
    pub mock_scripts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `run` or `replicate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Markdown destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One source of settings. Layers are merged flags > file > environment > defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub num_adjudicators: Option<usize>,
    pub consensus_threshold: Option<f64>,
    pub threshold_rule: Option<ThresholdRule>,
    pub max_rounds: Option<u32>,
    pub rag_judge: Option<bool>,
    pub rag_counsel: Option<bool>,
    pub model_id: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub retrieval_k: Option<usize>,
    pub seed: Option<u64>,
    pub sequential_rounds: Option<bool>,
    pub parallel_adjudicators: Option<bool>,
    pub meaningful_min_words: Option<usize>,
    pub backend: Option<BackendKind>,
    pub base_url: Option<String>,
    pub embed_model: Option<String>,
}

impl ConfigLayer {
    /// `other` wins wherever it sets a value.
    pub fn overlay(self, other: ConfigLayer) -> ConfigLayer {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigLayer { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            num_adjudicators,
            consensus_threshold,
            threshold_rule,
            max_rounds,
            rag_judge,
            rag_counsel,
            model_id,
            temperature,
            max_tokens,
            retrieval_k,
            seed,
            sequential_rounds,
            parallel_adjudicators,
            meaningful_min_words,
            backend,
            base_url,
            embed_model
        )
    }

    pub fn from_toml_file(path: &Path) -> CliResult<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&raw).map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
    }

    /// Reads `LLM_BASE_URL`, `EMBED_MODEL_ID` and `DELIBERATE_*` overrides
    /// through `get`, so tests can supply a fake environment.
    pub fn from_env_with(get: impl Fn(&str) -> Option<String>) -> CliResult<Self> {
        fn parsed<T: std::str::FromStr>(get: &dyn Fn(&str) -> Option<String>, key: &str) -> CliResult<Option<T>> {
            match get(key).filter(|v| !v.trim().is_empty()) {
                None => Ok(None),
                Some(v) => {
                    v.trim().parse().map(Some).map_err(|_| CliError::usage(format!("{key}={v} is not valid")))
                }
            }
        }
        let get: &dyn Fn(&str) -> Option<String> = &get;
        Ok(ConfigLayer {
            num_adjudicators: parsed(get, "DELIBERATE_ADJUDICATORS")?,
            consensus_threshold: parsed(get, "DELIBERATE_THRESHOLD")?,
            threshold_rule: match get("DELIBERATE_THRESHOLD_RULE") {
                Some(v) => Some(v.parse().map_err(CliError::usage)?),
                None => None,
            },
            max_rounds: parsed(get, "DELIBERATE_MAX_ROUNDS")?,
            model_id: get("DELIBERATE_MODEL").filter(|v| !v.trim().is_empty()),
            temperature: parsed(get, "DELIBERATE_TEMPERATURE")?,
            retrieval_k: parsed(get, "DELIBERATE_K")?,
            seed: parsed(get, "DELIBERATE_SEED")?,
            base_url: get(ENV_BASE_URL).filter(|v| !v.trim().is_empty()),
            embed_model: get(ENV_EMBED_MODEL).filter(|v| !v.trim().is_empty()),
            ..Default::default()
        })
    }

    fn from_flags(a: &SimArgs) -> Self {
        ConfigLayer {
            num_adjudicators: a.adjudicators,
            consensus_threshold: a.threshold,
            threshold_rule: a.threshold_rule,
            max_rounds: a.max_rounds,
            rag_judge: a.rag_judge.then_some(true),
            rag_counsel: a.rag_counsel.then_some(true),
            model_id: a.model.clone(),
            temperature: a.temperature,
            max_tokens: a.max_tokens,
            retrieval_k: a.k,
            seed: a.seed,
            sequential_rounds: a.sequential.then_some(true),
            backend: a.backend,
            ..Default::default()
        }
    }

    pub fn apply(&self, mut c: SimulationConfig) -> SimulationConfig {
        macro_rules! set {
            ($($layer:ident => $field:ident),*) => { $(if let Some(v) = self.$layer.clone() { c.$field = v; })* };
        }
        set!(
            num_adjudicators => num_adjudicators,
            consensus_threshold => consensus_threshold,
            threshold_rule => threshold_rule,
            max_rounds => max_rounds,
            rag_judge => rag_judge,
            rag_counsel => rag_counsel,
            model_id => model_id,
            temperature => temperature,
            max_tokens => max_tokens,
            retrieval_k => retrieval_k,
            sequential_rounds => sequential_rounds,
            parallel_adjudicators => parallel_adjudicators,
            meaningful_min_words => meaningful_min_words
        );
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        c
    }
}

/// Everything a simulation command needs, resolved from arguments and layers.
pub struct Setup {
    pub config: SimulationConfig,
    pub layer: ConfigLayer,
    pub case: CaseFile,
    pub templates: TemplateSet,
    pub store: Option<VectorStore>,
    pub embedder: Option<Box<dyn Embedder>>,
}

impl Setup {
    pub fn knowledge_base(&self) -> Option<(&VectorStore, &dyn Embedder)> {
        match (&self.store, &self.embedder) {
            (Some(s), Some(e)) => Some((s, e.as_ref())),
            _ => None,
        }
    }
}

pub fn resolve_layers(args: &SimArgs, env: ConfigLayer) -> CliResult<ConfigLayer> {
    let file = match &args.config {
        Some(p) => ConfigLayer::from_toml_file(p)?,
        None => ConfigLayer::default(),
    };
    Ok(env.overlay(file).overlay(ConfigLayer::from_flags(args)))
}

fn http_backend(layer: &ConfigLayer) -> CliResult<Arc<dyn Backend>> {
    let base = layer.base_url.clone().ok_or_else(|| {
        CliError::usage(format!("the http backend needs a base URL ({ENV_BASE_URL} or base_url in --config)"))
    })?;
    let mut cfg = HttpConfig::new(base);
    cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
    Ok(Arc::new(HttpBackend::new(cfg).map_err(|e| CliError::usage(e.to_string()))?))
}

fn backend_for_run(args: &SimArgs, layer: &ConfigLayer) -> CliResult<Arc<dyn Backend>> {
    match layer.backend.unwrap_or(BackendKind::Http) {
        BackendKind::Mock => {
            let path = args.mock_script.as_ref().ok_or_else(|| CliError::usage("--backend mock needs --mock-script"))?;
            let script = MockScript::load(path).map_err(|e| CliError::usage(e.to_string()))?;
            Ok(Arc::new(MockBackend::new(script)))
        }
        BackendKind::Http => http_backend(layer),
    }
}

fn load_templates(args: &SimArgs) -> CliResult<TemplateSet> {
    match &args.templates {
        Some(dir) => TemplateSet::load_dir(dir).map_err(|e| CliError::usage(e.to_string())),
        None => Ok(TemplateSet::builtin()),
    }
}

fn load_valid_case(path: &Path) -> CliResult<CaseFile> {
    let case = load_case(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let problems = validate_case(&case);
    if !problems.is_empty() {
        let list: Vec<String> = problems.iter().map(|v| format!("{}: {}", v.field, v.reason)).collect();
        return Err(CliError::usage(format!("{}: {}", path.display(), list.join("; "))));
    }
    Ok(case)
}

/// Resolves configuration, case, templates and knowledge base. `embed_backend`
/// serves remote-embedder stores.
pub fn prepare(args: &SimArgs, env: ConfigLayer, embed_backend: Option<Arc<dyn Backend>>) -> CliResult<Setup> {
    let layer = resolve_layers(args, env)?;
    let config = layer.apply(SimulationConfig::default());
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let case = load_valid_case(&args.case)?;
    let templates = load_templates(args)?;

    let (store, embedder) = match &args.store {
        Some(dir) => {
            let store = load_store(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
            let gateway = embed_backend.map(|b| Arc::new(Gateway::new(b)));
            let embedder = embedder_for_store(store.manifest(), gateway).map_err(CliError::usage)?;
            (Some(store), Some(embedder))
        }
        None => (None, None),
    };
    if config.uses_rag() && store.is_none() {
        return Err(CliError::usage("--rag-judge/--rag-counsel need --store"));
    }
    Ok(Setup { config, layer, case, templates, store, embedder })
}

pub fn cmd_ingest(args: &IngestArgs, env: &ConfigLayer) -> CliResult<()> {
    let params = ChunkParams::new(args.chunk_size, args.overlap).map_err(|e| CliError::usage(e.to_string()))?;
    if args.store.exists() && !args.force {
        let occupied = fs::read_dir(&args.store).map(|mut d| d.next().is_some()).unwrap_or(true);
        if occupied {
            return Err(CliError::usage(format!(
                "{} already exists; pass --force to replace it",
                args.store.display()
            )));
        }
    }
    let docs = read_corpus_dir(&args.corpus).map_err(|e| CliError::usage(format!("{}: {e}", args.corpus.display())))?;

    let embedder: Box<dyn Embedder> = match args.embedder {
        EmbedderKind::Hash => {
            if args.dimension == 0 {
                return Err(CliError::usage("--dimension must be positive"));
            }
            Box::new(HashEmbedder::new(args.dimension))
        }
        EmbedderKind::Remote => {
            let model = env
                .embed_model
                .clone()
                .ok_or_else(|| CliError::usage(format!("--embedder remote needs {ENV_EMBED_MODEL}")))?;
            Box::new(GatewayEmbedder::new(Arc::new(Gateway::new(http_backend(env)?)), model))
        }
    };
    let store = build_store(&docs, params, embedder.as_ref()).map_err(|e| CliError::usage(e.to_string()))?;
    persist_store(&store, &args.store).map_err(|e| CliError::usage(e.to_string()))?;
    for src in &store.manifest().sources {
        println!("{}: {} chunks", src.name, src.chunks);
    }
    println!(
        "stored {} chunks from {} sources in {} (embedder {})",
        store.len(),
        store.manifest().sources.len(),
        args.store.display(),
        store.manifest().embedder
    );
    Ok(())
}

fn embed_backend(args: &SimArgs, env: &ConfigLayer) -> CliResult<Option<Arc<dyn Backend>>> {
    let layer = resolve_layers(args, env.clone())?;
    if layer.backend == Some(BackendKind::Mock) {
        return Ok(Some(Arc::new(MockBackend::new(MockScript::new()))));
    }
    layer.base_url.is_some().then(|| http_backend(&layer)).transpose()
}

pub fn cmd_run(args: &RunArgs, env: &ConfigLayer) -> CliResult<PathBuf> {
    let setup = prepare(&args.sim, env.clone(), embed_backend(&args.sim, env)?)?;
    let backend = backend_for_run(&args.sim, &setup.layer)?;
    let config = SimulationConfig { run_index: args.run_index, ..setup.config.clone() };
    let gateway = Gateway::new(backend);
    match run_simulation(&config, &setup.case, setup.knowledge_base(), &gateway, &setup.templates) {
        Ok(r) => {
            let written = report::write_report(&r, &args.sim.out_dir).map_err(|e| CliError::run(e.to_string()))?;
            println!(
                "{}: {} after {} round(s), agreement {:.2}",
                r.case_id, r.verdict.outcome, r.verdict.rounds_used, r.verdict.final_agreement_ratio
            );
            println!("report: {}", written.json.display());
            Ok(written.json)
        }
        Err(aborted) => {
            let saved = report::write_partial(&aborted.partial, aborted.phase, &aborted.cause, &args.sim.out_dir);
            let note = match saved {
                Ok(p) => format!("partial transcript saved to {}", p.display()),
                Err(e) => format!("partial transcript not saved: {e}"),
            };
            Err(CliError::run(format!("{aborted}; {note}")))
        }
    }
}

pub fn cmd_replicate(args: &ReplicateArgs, env: &ConfigLayer) -> CliResult<ReplicationSummary> {
    if args.runs < 2 {
        return Err(CliError::usage("replicate needs --runs of at least 2"));
    }
    let setup = prepare(&args.sim, env.clone(), embed_backend(&args.sim, env)?)?;
    let backend = backend_for_run(&args.sim, &setup.layer)?;
    let results = harness::replicate(
        &setup.config,
        args.runs,
        &setup.case,
        setup.knowledge_base(),
        &backend,
        &setup.templates,
        args.parallel,
    );

    let mut entries = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let outcome = harness::run_outcome(r);
        let (report_path, error) = match r {
            Ok(rep) => match report::write_report(rep, &args.sim.out_dir) {
                Ok(w) => (Some(w.json.display().to_string()), None),
                Err(e) => (None, Some(e.to_string())),
            },
            Err(a) => {
                let _ = report::write_partial(&a.partial, a.phase, &a.cause, &args.sim.out_dir);
                (None, Some(a.to_string()))
            }
        };
        println!("run {i}: {outcome}");
        entries.push(RunEntry { run_index: i as u32, outcome, report: report_path, error });
    }
    let outcomes: Vec<_> = entries.iter().map(|e| e.outcome).collect();
    let summary = ReplicationSummary {
        case_id: setup.case.case_id.clone(),
        consistency: consistency(&outcomes).map_err(|e| CliError::usage(e.to_string()))?,
        run_entries: entries,
    };
    let path = args.sim.out_dir.join("consistency.json");
    harness::write_consistency(&summary, &path).map_err(|e| CliError::run(format!("{}: {e}", path.display())))?;
    println!(
        "consistency {:.2} ({}) over {} runs: {}",
        summary.consistency.consistency_rate,
        summary.consistency.label,
        summary.consistency.runs,
        harness::distribution_labels(&summary.consistency)
            .iter()
            .map(|(k, v)| format!("{k} {v}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(summary)
}

pub fn parse_rag_setting(s: &str) -> CliResult<(bool, bool)> {
    match s.trim().to_lowercase().as_str() {
        "both" | "on" | "rag" => Ok((true, true)),
        "none" | "off" | "norag" => Ok((false, false)),
        "judge" => Ok((true, false)),
        "counsel" => Ok((false, true)),
        other => Err(CliError::usage(format!("unknown --rag setting `{other}` (both, none, judge, counsel)"))),
    }
}

pub fn cmd_ablate(args: &AblateArgs, env: &ConfigLayer) -> CliResult<String> {
    let models: Vec<String> = args.models.iter().map(|m| m.trim().to_string()).filter(|m| !m.is_empty()).collect();
    let rag_pairs = if args.rag.is_empty() {
        vec![(true, true), (false, false)]
    } else {
        args.rag.iter().map(|s| parse_rag_setting(s)).collect::<CliResult<Vec<_>>>()?
    };

    let mut sim = args.sim.clone();
    // Per-cell flags decide retrieval; the base config must not demand a store.
    sim.rag_judge = false;
    sim.rag_counsel = false;
    let setup = prepare(&sim, env.clone(), embed_backend(&sim, env)?)?;
    let spec = AblationSpec {
        models,
        rag_pairs,
        runs_per_cell: args.runs,
        case_path: args.sim.case.clone(),
        base: setup.config.clone(),
    };
    spec.validate().map_err(CliError::usage)?;

    let factory: Box<harness::BackendFactory<'_>> = match setup.layer.backend.unwrap_or(BackendKind::Http) {
        BackendKind::Mock => {
            let root = args
                .mock_scripts
                .clone()
                .ok_or_else(|| CliError::usage("--backend mock for ablate needs --mock-scripts"))?;
            Box::new(mock_backend_factory(root))
        }
        BackendKind::Http => {
            let backend = http_backend(&setup.layer)?;
            Box::new(move |_: &str, _: bool, _: bool| Ok(Arc::clone(&backend)))
        }
    };

    let out_dir = args.sim.out_dir.clone();
    let cells = harness::run_ablation(
        &spec,
        &setup.case,
        setup.knowledge_base(),
        factory.as_ref(),
        &setup.templates,
        args.jobs,
        &|cell, reports| {
            let dir = out_dir.join("cells").join(format!(
                "{}_{}_{}",
                cell.model,
                if cell.rag_judge { "ragj" } else { "noragj" },
                if cell.rag_counsel { "ragc" } else { "noragc" }
            ));
            for r in reports.iter().flatten() {
                if let Err(e) = report::write_report(r, &dir) {
                    log::warn!("cannot write cell report: {e}");
                }
            }
        },
    );

    let table = render_ablation_table(&cells);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::run(format!("{}: {e}", out_dir.display())))?;
    let md = out_dir.join("ablation.md");
    fs::write(&md, &table).map_err(|e| CliError::run(format!("{}: {e}", md.display())))?;
    let json = out_dir.join("ablation.json");
    fs::write(&json, serde_json::to_string_pretty(&cells).expect("serialises") + "\n")
        .map_err(|e| CliError::run(format!("{}: {e}", json.display())))?;
    print!("{table}");
    if cells.iter().all(|c| c.result.is_err()) {
        return Err(CliError::run("every ablation cell failed"));
    }
    Ok(table)
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    let rep = report::read_report(&args.input).map_err(|e| CliError::usage(e.to_string()))?;
    let md = report::render_markdown(&rep);
    match &args.out {
        Some(path) => fs::write(path, &md).map_err(|e| CliError::run(format!("{}: {e}", path.display())))?,
        None => print!("{md}"),
    }
    Ok(md)
}

/// Parses `argv` and runs the command against the given environment layer.
/// Returns the process exit code.
pub fn run_with_env<I, T>(argv: I, env: &ConfigLayer) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, env).map(|_| ()),
        Command::Run(a) => cmd_run(a, env).map(|_| ()),
        Command::Replicate(a) => cmd_replicate(a, env).map(|_| ()),
        Command::Ablate(a) => cmd_ablate(a, env).map(|_| ()),
        Command::Report(a) => cmd_report(a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match ConfigLayer::from_env_with(|k| std::env::var(k).ok()) {
        Ok(env) => run_with_env(argv, &env),
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
