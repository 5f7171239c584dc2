//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//! Criterion 12 needs a live endpoint (LLM_BASE_URL) and is skipped otherwise.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deliberate_core::agents::{extract_citations, offered_citations, Leaning, TemplateSet};
use deliberate_core::harness::{
    mock_backend_factory, render_ablation_table, replicate, run_ablation, run_outcome, AblationSpec,
    ABLATION_COLUMNS,
};
use deliberate_core::knowledge_base::{
    build_store, chunk_document, format_context, load_store, persist_store, query, read_corpus_dir, ChunkParams,
    DocumentChunk, Embedder, HashEmbedder, RetrievalResult, VectorStore, MANIFEST_FILE,
};
use deliberate_core::llm_gateway::{Backend, Gateway, GatewayEmbedder, HttpBackend, HttpConfig, MockBackend};
use deliberate_core::metrics::{consistency, grounding_score, latency_stats, ConsistencyLabel};
use deliberate_core::orchestrator::{consensus_of, run_simulation, Outcome, SimulationConfig, ThresholdRule};
use deliberate_core::report::{masked_json, metric_rows, render_markdown, validate_report_json, METRIC_LABELS};

enum Verdict {
    Pass(String),
    Skip(String),
}

type Check = fn() -> Result<Verdict, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_consensus_oracle() -> Result<Verdict, String> {
    let all = [Leaning::Guilty, Leaning::NotGuilty, Leaning::Undecided];
    let mut cases = 0;
    let mut mismatches = 0;
    for n in 1..=6u32 {
        for code in 0..3usize.pow(n) {
            let mut c = code;
            let votes: Vec<Leaning> = (0..n)
                .map(|_| {
                    let l = all[c % 3];
                    c /= 3;
                    l
                })
                .collect();
            for (num, den, thr) in [(1, 2, 0.5), (4, 5, 0.8), (1, 1, 1.0)] {
                for (strict, rule) in [(false, ThresholdRule::GreaterOrEqual), (true, ThresholdRule::Greater)] {
                    let got = consensus_of(&votes, thr, rule);
                    let (top, modal, consensus) = consensus_oracle(&votes, num, den, strict);
                    cases += 1;
                    if got.agreement_ratio != top as f64 / n as f64
                        || got.modal_leaning != modal
                        || got.consensus != consensus
                    {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches of {cases}"))?;
    Ok(Verdict::Pass(format!("{cases} vectors x rules, 0 mismatches")))
}

fn random_store(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> VectorStore {
    let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.gen_bool(0.2) {
            let j = rng.gen_range(0..i);
            vectors.push(vectors[j].clone());
        } else {
            let mut v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            v[0] += 0.01;
            vectors.push(v);
        }
    }
    let chunks = (0..n)
        .map(|i| DocumentChunk {
            chunk_id: i as u64,
            source_document: format!("src{}", i % 4),
            ordinal: (i / 4) as u32,
            text: format!("text {i}"),
            char_start: 0,
            char_end: 6,
        })
        .collect();
    VectorStore::from_parts("fixed", ChunkParams::new(8, 1).unwrap(), chunks, vectors).unwrap()
}

fn c2_retrieval_exactness() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut queries = 0;
    for s in 0..50 {
        let n = rng.gen_range(1..=500);
        let dim = if s % 2 == 0 { 16 } else { 384 };
        let store = random_store(&mut rng, n, dim);
        let q: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let embedder = FixedEmbedder { id: "fixed".into(), vector: q.clone() };
        for k in [1, 5, n] {
            let got: Vec<(u64, f64)> = query(&store, "q", k, &embedder)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|r| (r.chunk.chunk_id, r.score))
                .collect();
            ensure(got == ranking_oracle(&store, &q, k), || format!("store {s} (n={n}, d={dim}) k={k} differs"))?;
            queries += 1;
        }
    }
    Ok(Verdict::Pass(format!("50 stores, {queries} queries, exact order")))
}

fn c3_chunking() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alphabet: Vec<char> = "abcdefgh ijk.\né漢字".chars().collect();
    for t in 0..200 {
        let len = rng.gen_range(1..3000);
        let text: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        let size = rng.gen_range(1..=1200);
        let overlap = rng.gen_range(0..size);
        let chunks = chunk_document(&text, "doc", size, overlap).map_err(|e| e.to_string())?;
        ensure(reassemble(&chunks) == text, || format!("triple {t}: reassembly differs"))?;
        ensure(chunks[0].char_start == 0 && chunks.last().unwrap().char_end == len, || format!("triple {t}: span"))?;
        for w in chunks.windows(2) {
            ensure(w[0].char_end - w[1].char_start == overlap, || format!("triple {t}: overlap"))?;
        }
        ensure(chunks.iter().all(|c| c.char_end - c.char_start <= size), || format!("triple {t}: oversize chunk"))?;
    }
    Ok(Verdict::Pass("200 triples reassemble exactly".into()))
}

fn c4_persistence() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for s in 0..10 {
        let n = rng.gen_range(1..=300);
        let dim = if s % 2 == 0 { 16 } else { 384 };
        let store = random_store(&mut rng, n, dim);
        let a = dir.path().join(format!("a{s}"));
        let b = dir.path().join(format!("b{s}"));
        persist_store(&store, &a).map_err(|e| e.to_string())?;
        let loaded = load_store(&a).map_err(|e| e.to_string())?;
        for i in 0..n {
            let close = loaded.vector(i).iter().zip(store.vector(i)).all(|(x, y)| (f64::from(*x) - f64::from(*y)).abs() <= 1e-9);
            ensure(close, || format!("store {s}: vector {i} differs"))?;
        }
        ensure(loaded.chunks() == store.chunks(), || format!("store {s}: chunks differ"))?;
        persist_store(&loaded, &b).map_err(|e| e.to_string())?;
        let (ma, mb) = (std::fs::read(a.join(MANIFEST_FILE)), std::fs::read(b.join(MANIFEST_FILE)));
        ensure(ma.map_err(|e| e.to_string())? == mb.map_err(|e| e.to_string())?, || format!("store {s}: manifest bytes"))?;
    }
    Ok(Verdict::Pass("10 stores round-trip".into()))
}

fn mock_run(script: &str, config: &SimulationConfig) -> Result<deliberate_core::orchestrator::SimulationReport, String> {
    let gateway = mock_gateway(fixture_script(script));
    run_simulation(config, &fixture_case("case_001"), None, &gateway, &TemplateSet::builtin()).map_err(|e| e.to_string())
}

fn c5_metric_block() -> Result<Verdict, String> {
    let r = mock_run("unanimous_not_guilty.json", &SimulationConfig::default())?;
    let rows = metric_rows(&r);
    let labels: Vec<&str> = rows.iter().map(|(l, _)| *l).collect();
    ensure(labels == METRIC_LABELS, || format!("labels {labels:?}"))?;
    let md = render_markdown(&r);
    let block_rows = METRIC_LABELS.iter().filter(|l| md.contains(&format!("| {l} |"))).count();
    ensure(block_rows == 9, || format!("{block_rows} labelled rows in markdown"))?;
    let value = |label: &str| rows.iter().find(|(l, _)| *l == label).map(|(_, v)| v.as_str()).unwrap_or("");
    for (label, want) in [
        ("No. of Adjudicators", "5"),
        ("Final Verdict", "Not Guilty"),
        ("Deliberation Rounds", "1"),
        ("Final Agreement Ratio", "1.00"),
        ("Adjudicator Participation Rate", "1.00"),
    ] {
        ensure(value(label) == want, || format!("{label} = {} (want {want})", value(label)))?;
    }
    let r2 = mock_run("split_then_guilty.json", &SimulationConfig::default())?;
    ensure(r2.verdict.rounds_used == 2 && r2.verdict.outcome == Outcome::Guilty, || {
        format!("split script: {:?} in {} rounds", r2.verdict.outcome, r2.verdict.rounds_used)
    })?;
    Ok(Verdict::Pass("nine labels; Not Guilty/1/1.00/1.00; split script Rounds=2".into()))
}

fn c6_hung() -> Result<Verdict, String> {
    let config = SimulationConfig { threshold_rule: ThresholdRule::Greater, max_rounds: 5, ..Default::default() };
    let r = mock_run("hung_split.json", &config)?;
    let n = r.transcript.adjudicator_statement_count();
    ensure(r.verdict.outcome == Outcome::Hung && r.verdict.rounds_used == 5 && n == 25, || {
        format!("{:?}, {} rounds, {n} statements", r.verdict.outcome, r.verdict.rounds_used)
    })?;
    Ok(Verdict::Pass("Hung after 5 rounds, 25 statements".into()))
}

fn c7_grounding() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let vocab = ["knife", "alibi", "Witness", "eye", "motive", "pen", "a", "_", "rod", "blood"];
    let seps = [" ", ", ", ".", "\n", "(", ")", "", "_", "-"];
    let pool = ["knife", "alibi", "witness", "eye witness", "motive", "a a", "blood_stain", "rod", "pen"];
    let sample_text = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.gen_range(0..25))
            .map(|_| format!("{}{}", vocab[rng.gen_range(0..vocab.len())], seps[rng.gen_range(0..seps.len())]))
            .collect()
    };
    for t in 0..1000 {
        let text = sample_text(&mut rng);
        let keywords: Vec<String> = (0..rng.gen_range(1..5)).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect();
        let got = grounding_score(&text, &keywords);
        ensure((0.0..=1.0).contains(&got), || format!("pair {t}: {got} out of bounds"))?;
        let want = grounding_oracle(&text, &keywords);
        ensure(got == want, || format!("pair {t}: {got} vs oracle {want} for {text:?} {keywords:?}"))?;
    }
    for t in 0..100 {
        let text = sample_text(&mut rng);
        let keywords: Vec<String> = (0..rng.gen_range(1..5)).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect();
        let kw = &keywords[rng.gen_range(0..keywords.len())];
        let cuts = safe_cuts(&text, &keywords);
        let cut = cuts[rng.gen_range(0..cuts.len())];
        let inserted = format!("{} {kw} {}", &text[..cut], &text[cut..]);
        let (before, after) = (grounding_score(&text, &keywords), grounding_score(&inserted, &keywords));
        ensure(after >= before, || format!("insertion {t}: {before} -> {after}"))?;
    }
    Ok(Verdict::Pass("1000 pairs equal the scanner; 100 insertions monotone".into()))
}

fn c8_citations() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sources = ["ipc", "crpc", "constitution", "evidence act"];
    let mut markers = 0;
    for t in 0..100 {
        let results: Vec<RetrievalResult> = (0..rng.gen_range(1..10))
            .map(|_| RetrievalResult {
                chunk: DocumentChunk {
                    chunk_id: rng.gen_range(0..10_000),
                    source_document: sources[rng.gen_range(0..sources.len())].into(),
                    ordinal: 0,
                    text: "text, with [brackets]".into(),
                    char_start: 0,
                    char_end: 1,
                },
                score: rng.gen_range(-1.0..1.0),
            })
            .collect();
        let ctx = format_context(&results);
        let (cites, valid) = extract_citations(&ctx, &results);
        ensure(cites == offered_citations(&results) && valid.iter().all(|v| *v), || format!("list {t}: marker lost"))?;
        markers += cites.len();
        let injected = format!("{ctx} [Source: ipc, chunk 10001] [Source: invented, chunk 1]");
        let (_, valid) = extract_citations(&injected, &results);
        ensure(valid.len() == results.len() + 2 && !valid[valid.len() - 1] && !valid[valid.len() - 2], || {
            format!("list {t}: injected citation not flagged")
        })?;
    }
    Ok(Verdict::Pass(format!("{markers} markers recovered, 200 injected flagged")))
}

fn c9_latency() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for t in 0..100 {
        let n = if t == 0 { 1 } else if t == 1 { 10_000 } else { rng.gen_range(1..=10_000) };
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..30_000.0)).collect();
        let got = latency_stats(&values).map_err(|e| e.to_string())?;
        let (mean, median, min, max) = latency_oracle(&values);
        for (name, a, b) in [("mean", got.mean, mean), ("median", got.median, median), ("min", got.min, min), ("max", got.max, max)] {
            ensure((a - b).abs() <= 1e-9, || format!("list {t}: {name} {a} vs {b}"))?;
        }
    }
    Ok(Verdict::Pass("100 lists within 1e-9".into()))
}

fn c10_consistency_and_ablation() -> Result<Verdict, String> {
    let backend: Arc<dyn Backend> = Arc::new(MockBackend::new(fixture_script("unanimous_not_guilty.json")));
    let case = fixture_case("case_001");
    let runs = replicate(&SimulationConfig::default(), 5, &case, None, &backend, &TemplateSet::builtin(), false);
    let s = consistency(&runs.iter().map(run_outcome).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    ensure(s.consistency_rate == 1.0 && s.label == ConsistencyLabel::VeryHigh, || format!("{s:?}"))?;

    let docs = read_corpus_dir(&fixtures().join("corpus")).map_err(|e| e.to_string())?;
    let embedder = HashEmbedder::default();
    let store = build_store(&docs, ChunkParams::default(), &embedder).map_err(|e| e.to_string())?;
    let spec = AblationSpec {
        models: vec!["model-a".into(), "model-b".into()],
        rag_pairs: vec![(true, true), (false, false)],
        runs_per_cell: 2,
        case_path: fixtures().join("cases/case_001.json"),
        base: SimulationConfig::default(),
    };
    let factory = mock_backend_factory(fixtures().join("scripts/ablation"));
    let cells = run_ablation(&spec, &case, Some((&store, &embedder)), &factory, &TemplateSet::builtin(), 2, &|_, _| {});
    let table = render_ablation_table(&cells);
    let lines: Vec<&str> = table.lines().collect();
    ensure(lines.len() == 6, || format!("{} table lines", lines.len()))?;
    ensure(lines[0] == format!("| {} |", ABLATION_COLUMNS.join(" | ")), || format!("header {}", lines[0]))?;
    let cols = |line: &str| line.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect::<Vec<_>>();
    for model in ["model-a", "model-b"] {
        let rows: Vec<Vec<String>> = lines[2..].iter().map(|l| cols(l)).filter(|c| c[0] == model).collect();
        let on = rows.iter().find(|c| c[1] == "Yes").ok_or("missing RAG-on row")?;
        let off = rows.iter().find(|c| c[1] == "No").ok_or("missing RAG-off row")?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s}: {e}"));
        ensure(num(&on[3])? > num(&off[3])? && num(&on[4])? > num(&off[4])?, || {
            format!("{model}: RAG-on {}/{} vs RAG-off {}/{}", on[3], on[4], off[3], off[4])
        })?;
    }
    Ok(Verdict::Pass("5 runs Very High; 4-row table, RAG-on above RAG-off per model".into()))
}

fn c11_determinism() -> Result<Verdict, String> {
    let config = SimulationConfig { seed: Some(11), ..Default::default() };
    let a = masked_json(&mock_run("split_then_guilty.json", &config)?);
    let b = masked_json(&mock_run("split_then_guilty.json", &config)?);
    ensure(a == b, || "masked reports differ".into())?;
    Ok(Verdict::Pass(format!("{} masked bytes identical", a.len())))
}

fn c12_remote_smoke() -> Result<Verdict, String> {
    let Some(http) = HttpConfig::from_env() else {
        return Ok(Verdict::Skip("LLM_BASE_URL not set".into()));
    };
    let backend: Arc<dyn Backend> = Arc::new(HttpBackend::new(http).map_err(|e| e.to_string())?);
    let gateway = Arc::new(Gateway::new(Arc::clone(&backend)));
    let embedder: Box<dyn Embedder> = match std::env::var("EMBED_MODEL_ID").ok().filter(|m| !m.is_empty()) {
        Some(model) => Box::new(GatewayEmbedder::new(Arc::clone(&gateway), model)),
        None => Box::new(HashEmbedder::default()),
    };
    let docs = read_corpus_dir(&fixtures().join("corpus")).map_err(|e| e.to_string())?;
    let store = build_store(&docs, ChunkParams::default(), embedder.as_ref()).map_err(|e| e.to_string())?;
    let config = SimulationConfig {
        rag_judge: true,
        rag_counsel: true,
        model_id: std::env::var("DELIBERATE_MODEL").unwrap_or_else(|_| "default".into()),
        ..Default::default()
    };
    let run_gateway = Gateway::new(backend);
    let r = run_simulation(&config, &fixture_case("case_001"), Some((&store, embedder.as_ref())), &run_gateway, &TemplateSet::builtin())
        .map_err(|e| e.to_string())?;
    validate_report_json(&serde_json::to_value(&r).map_err(|e| e.to_string())?).map_err(|p| p.join("; "))?;
    let stmts: Vec<_> = r.transcript.all_statements().collect();
    ensure(stmts.iter().all(|s| s.citations.len() == s.citation_validity.len()), || "unflagged citation".into())?;
    Ok(Verdict::Pass(format!("{} after {} round(s), report valid", r.verdict.outcome, r.verdict.rounds_used)))
}

fn main() {
    let criteria: [(u32, &str, Check, Duration); 12] = [
        (1, "consensus oracle equivalence", c1_consensus_oracle, Duration::from_secs(5)),
        (2, "retrieval exactness", c2_retrieval_exactness, Duration::from_secs(30)),
        (3, "chunking invariants", c3_chunking, Duration::from_secs(5)),
        (4, "store persistence", c4_persistence, Duration::from_secs(10)),
        (5, "metric block shape", c5_metric_block, Duration::from_secs(5)),
        (6, "hung panel path", c6_hung, Duration::from_secs(5)),
        (7, "grounding score oracle", c7_grounding, Duration::from_secs(10)),
        (8, "citation round trip", c8_citations, Duration::from_secs(5)),
        (9, "latency stats oracle", c9_latency, Duration::from_secs(5)),
        (10, "consistency and ablation shape", c10_consistency_and_ablation, Duration::from_secs(20)),
        (11, "determinism", c11_determinism, Duration::from_secs(5)),
        (12, "remote smoke", c12_remote_smoke, Duration::from_secs(600)),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let elapsed = start.elapsed();
        let line = match outcome {
            Ok(Verdict::Pass(detail)) if elapsed <= budget => format!("PASS  {detail}"),
            Ok(Verdict::Pass(detail)) => {
                failed += 1;
                format!("FAIL  over budget {budget:?}: {detail}")
            }
            Ok(Verdict::Skip(why)) => format!("SKIP  {why}"),
            Err(why) => {
                failed += 1;
                format!("FAIL  {why}")
            }
        };
        println!("criterion {id:>2} {name:<32} {line} [{:.2}s]", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
