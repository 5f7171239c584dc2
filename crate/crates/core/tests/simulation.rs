mod common;

use std::sync::Arc;

use common::*;
use deliberate_core::agents::{Leaning, Role, TemplateSet};
use deliberate_core::harness::{
    mock_backend_factory, render_ablation_table, replicate, run_ablation, run_outcome, AblationSpec,
    ABLATION_COLUMNS,
};
use deliberate_core::knowledge_base::{build_store, read_corpus_dir, ChunkParams, HashEmbedder};
use deliberate_core::llm_gateway::{Backend, CallKind, MockBackend, MockScript};
use deliberate_core::metrics::{consistency, summarize, ConsistencyLabel, RunOutcome};
use deliberate_core::orchestrator::{run_simulation, Outcome, Phase, SimulationConfig, ThresholdRule};
use deliberate_core::report::{self, masked_json, metric_rows, validate_report_json, METRIC_LABELS};

fn run(script: &str, config: &SimulationConfig) -> deliberate_core::orchestrator::SimulationReport {
    let gateway = mock_gateway(fixture_script(script));
    run_simulation(config, &fixture_case("case_001"), None, &gateway, &TemplateSet::builtin()).unwrap()
}

#[test]
fn unanimous_not_guilty_in_one_round() {
    let r = run("unanimous_not_guilty.json", &SimulationConfig::default());
    assert_eq!(r.verdict.outcome, Outcome::NotGuilty);
    assert_eq!(r.verdict.rounds_used, 1);
    assert_eq!(r.verdict.final_agreement_ratio, 1.0);
    assert_eq!(r.metrics.participation_rate_per_round, vec![1.0]);
    assert_eq!(r.metrics.avg_meaningful_per_adjudicator, 1.0);
}

#[test]
fn split_then_unified_takes_two_rounds() {
    let r = run("split_then_guilty.json", &SimulationConfig::default());
    assert_eq!(r.verdict.outcome, Outcome::Guilty);
    assert_eq!(r.verdict.rounds_used, 2);
    let first = &r.transcript.rounds[0].consensus;
    assert_eq!((first.agreement_ratio, first.modal_leaning, first.consensus), (0.6, Some(Leaning::Guilty), false));
}

#[test]
fn persistent_split_is_hung() {
    let config = SimulationConfig { threshold_rule: ThresholdRule::Greater, ..Default::default() };
    let r = run("hung_split.json", &config);
    assert_eq!(r.verdict.outcome, Outcome::Hung);
    assert_eq!(r.verdict.rounds_used, 5);
    assert_eq!(r.verdict.final_agreement_ratio, 0.6);
    assert_eq!(r.transcript.adjudicator_statement_count(), 25);
}

#[test]
fn round_zero_order_and_no_calls_after_consensus() {
    let gateway = mock_gateway(fixture_script("split_then_guilty.json"));
    let r = run_simulation(
        &SimulationConfig::default(),
        &fixture_case("case_001"),
        None,
        &gateway,
        &TemplateSet::builtin(),
    )
    .unwrap();
    let log = gateway.call_log();
    let roles: Vec<&str> = log.iter().take(3).map(|c| c.role.as_str()).collect();
    assert_eq!(roles, ["judge", "prosecution", "defense"]);
    // 3 preparation calls plus 5 per round, nothing after round 2
    assert_eq!(log.len(), 3 + 5 * 2);
    assert!(log.iter().all(|c| c.round <= 2));
    let seqs: Vec<u64> = log.iter().map(|c| c.seq).collect();
    assert_eq!(seqs, (0..log.len() as u64).collect::<Vec<_>>());
    assert_eq!(r.timing.calls.len(), log.len());
}

#[test]
fn report_shape_invariants() {
    for (script, rule) in [
        ("unanimous_not_guilty.json", ThresholdRule::GreaterOrEqual),
        ("split_then_guilty.json", ThresholdRule::GreaterOrEqual),
        ("hung_split.json", ThresholdRule::Greater),
    ] {
        let config = SimulationConfig { threshold_rule: rule, num_adjudicators: 5, ..Default::default() };
        let r = run(script, &config);
        assert_eq!(r.transcript.preparation.len(), 3);
        let roles: Vec<Role> = r.transcript.preparation.iter().map(|s| s.role).collect();
        assert_eq!(roles, [Role::Judge, Role::Prosecution, Role::Defense]);
        assert_eq!(r.transcript.adjudicator_statement_count(), r.verdict.rounds_used as usize * 5);
        for (i, round) in r.transcript.rounds.iter().enumerate() {
            assert_eq!(round.round as usize, i + 1);
            let ids: Vec<&str> = round.statements.iter().map(|s| s.agent_id.as_str()).collect();
            assert_eq!(ids, ["1", "2", "3", "4", "5"]);
        }
        assert!(r.verdict.rounds_used >= 1 && r.verdict.rounds_used <= config.max_rounds);
        let v = serde_json::to_value(&r).unwrap();
        validate_report_json(&v).unwrap();
    }
}

#[test]
fn metric_block_has_the_nine_rows() {
    let r = run("unanimous_not_guilty.json", &SimulationConfig::default());
    let rows = metric_rows(&r);
    let labels: Vec<&str> = rows.iter().map(|(l, _)| *l).collect();
    assert_eq!(labels, METRIC_LABELS);
    let md = report::render_markdown(&r);
    for label in METRIC_LABELS {
        assert!(md.contains(&format!("| {label} |")), "{label}");
    }
    assert!(md.contains("| Final Verdict | Not Guilty |"));
}

#[test]
fn mock_runs_are_deterministic_after_masking() {
    let config = SimulationConfig { seed: Some(7), ..Default::default() };
    let a = run("split_then_guilty.json", &config);
    let b = run("split_then_guilty.json", &config);
    assert_eq!(masked_json(&a), masked_json(&b));
    assert!(!masked_json(&a).contains("\"timing\""));
}

#[test]
fn sequential_and_parallel_rounds_agree_on_content() {
    let par = run("split_then_guilty.json", &SimulationConfig::default());
    let seq = run("split_then_guilty.json", &SimulationConfig { parallel_adjudicators: false, ..Default::default() });
    let strip = |mut s: String| {
        s = s.replace("\"parallel_adjudicators\": false", "\"parallel_adjudicators\": true");
        s
    };
    assert_eq!(strip(masked_json(&par)), strip(masked_json(&seq)));
}

#[test]
fn summary_recomputes_from_a_persisted_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = run("split_then_guilty.json", &SimulationConfig::default());
    let written = report::write_report(&r, dir.path()).unwrap();
    let back = report::read_report(&written.json).unwrap();
    let again = summarize(&back.transcript, &back.timing.calls, &back.case, &back.config).unwrap();
    assert_eq!(again, back.metrics);
    assert_eq!(back, r);
    assert!(written.markdown.exists());
}

#[test]
fn gateway_failure_aborts_with_partial_transcript() {
    // no adjudicator entries: preparation succeeds, round 1 fails
    let script = MockScript::new()
        .with("judge:judge:0", "instructions")
        .with("prosecution:prosecution:0", "argument")
        .with("defense:defense:0", "argument");
    let gateway = mock_gateway(script);
    let err = run_simulation(
        &SimulationConfig::default(),
        &fixture_case("case_001"),
        None,
        &gateway,
        &TemplateSet::builtin(),
    )
    .unwrap_err();
    assert_eq!(err.phase, Phase::Deliberation);
    assert_eq!(err.partial.transcript.preparation.len(), 3);
    assert!(err.partial.transcript.rounds.is_empty());
    assert!(err.cause.contains("adjudicator:1:1"));
    assert_eq!(err.partial.timing.calls.len(), gateway.call_count());
}

#[test]
fn retrieval_without_a_store_aborts_at_initialization() {
    let gateway = mock_gateway(fixture_script("unanimous_not_guilty.json"));
    let config = SimulationConfig { rag_judge: true, ..Default::default() };
    let err = run_simulation(&config, &fixture_case("case_001"), None, &gateway, &TemplateSet::builtin()).unwrap_err();
    assert_eq!(err.phase, Phase::Initialization);
    assert_eq!(gateway.call_count(), 0);
}

#[test]
fn rag_run_offers_context_and_flags_citations() {
    let docs = read_corpus_dir(&fixtures().join("corpus")).unwrap();
    let embedder = HashEmbedder::default();
    let store = build_store(&docs, ChunkParams::default(), &embedder).unwrap();
    let script = fixture_script("unanimous_not_guilty.json")
        .with("judge:judge:0", "Murder is defined at [Source: ipc, chunk 5]. Also [Source: nowhere, chunk 1].");
    let gateway = mock_gateway(script);
    let config = SimulationConfig { rag_judge: true, rag_counsel: true, ..Default::default() };
    let r =
        run_simulation(&config, &fixture_case("case_001"), Some((&store, &embedder)), &gateway, &TemplateSet::builtin())
            .unwrap();
    let judge = &r.transcript.preparation[0];
    assert_eq!(judge.context_offered.len(), 5);
    assert_eq!(judge.citations.len(), 2);
    assert!(!judge.citation_validity[1]);
    let embeds = gateway.call_log().iter().filter(|c| c.kind == CallKind::Embed).count();
    assert_eq!(embeds, 0, "hash embedder runs locally");
    validate_report_json(&serde_json::to_value(&r).unwrap()).unwrap();
}

#[test]
fn replication_consistency() {
    let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(fixture_script("unanimous_not_guilty.json")));
    let case = fixture_case("case_001");
    let results = replicate(&SimulationConfig::default(), 5, &case, None, &backend, &TemplateSet::builtin(), false);
    let outcomes: Vec<RunOutcome> = results.iter().map(run_outcome).collect();
    let s = consistency(&outcomes).unwrap();
    assert_eq!((s.consistency_rate, s.label), (1.0, ConsistencyLabel::VeryHigh));
    let indices: Vec<u32> = results.iter().map(|r| r.as_ref().unwrap().run_index).collect();
    assert_eq!(indices, [0, 1, 2, 3, 4]);

    let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(fixture_script("replicate_variation.json")));
    let results = replicate(&SimulationConfig::default(), 5, &case, None, &backend, &TemplateSet::builtin(), true);
    let s = consistency(&results.iter().map(run_outcome).collect::<Vec<_>>()).unwrap();
    assert_eq!(s.verdict_distribution[&RunOutcome::NotGuilty], 4);
    assert_eq!(s.verdict_distribution[&RunOutcome::Guilty], 1);
    assert_eq!((s.consistency_rate, s.label), (0.8, ConsistencyLabel::High));
}

#[test]
fn aborted_runs_count_in_the_distribution() {
    let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(MockScript::new()));
    let results =
        replicate(&SimulationConfig::default(), 2, &fixture_case("case_001"), None, &backend, &TemplateSet::builtin(), false);
    let s = consistency(&results.iter().map(run_outcome).collect::<Vec<_>>()).unwrap();
    assert_eq!(s.verdict_distribution[&RunOutcome::Aborted], 2);
}

#[test]
fn ablation_table_shape_and_errors() {
    let docs = read_corpus_dir(&fixtures().join("corpus")).unwrap();
    let embedder = HashEmbedder::default();
    let store = build_store(&docs, ChunkParams::default(), &embedder).unwrap();
    let spec = AblationSpec {
        models: vec!["model-a".into(), "model-b".into(), "model-missing".into()],
        rag_pairs: vec![(true, true), (false, false)],
        runs_per_cell: 2,
        case_path: fixtures().join("cases/case_001.json"),
        base: SimulationConfig::default(),
    };
    spec.validate().unwrap();
    let factory = mock_backend_factory(fixtures().join("scripts/ablation"));
    let cells = run_ablation(
        &spec,
        &fixture_case("case_001"),
        Some((&store, &embedder)),
        &factory,
        &TemplateSet::builtin(),
        3,
        &|_, _| {},
    );
    assert_eq!(cells.len(), 6);
    let table = render_ablation_table(&cells);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], format!("| {} |", ABLATION_COLUMNS.join(" | ")));
    assert_eq!(lines.len(), 2 + 6);
    assert!(lines[6].contains("ERROR") && lines[7].contains("ERROR"));
    assert!(!lines[2].contains("ERROR"));

    let empty = AblationSpec { models: vec![], ..spec };
    assert!(empty.validate().is_err());
}
