//! End-to-end acceptance criteria. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any
//! criterion does.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use ctt_core::bench::{compare, run_experiment, BenchMode, Corpus, FaultSpec, TimingMode, BENCH_EPOCH};
use ctt_core::codegraph::{Change, ChangeEvent, CodeGraph};
use ctt_core::coverage::{acceptance_rate, coverage_report, detection_accuracy};
use ctt_core::embedding::{apply_and_propagate, propagate, FactorWeights, PropagationParams};
use ctt_core::gateway::markers::has_marker;
use ctt_core::gateway::{MockBackend, SuggestionDraft, SuggestionKind};
use ctt_core::orchestrator::{Engine, PendingChange, SuggestionStatus};
use ctt_core::prompt::{construct_prompt, Focus, HistoryEntry, PromptConfig, Role, TaskKind};
use ctt_core::retrieval::{retrieve, QueryContext, RankedSnippet, ScoreCoeffs};
use ctt_core::store::{read_events, JsonlWriter, Layout};
use ctt_core::time::{ManualClock, Timestamp};
use ctt_core::EngineConfig;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn p1_retrieval_oracle() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..1000 {
        let mut r = rng(10_000 + seed);
        let (g, now) = random_graph(&mut r, 50);
        let ids: Vec<_> = g.ids().collect();
        let focus = ids[r.gen_range(0..ids.len())];
        let k = r.gen_range(1..=10);
        let query = QueryContext {
            focus,
            changed: BTreeSet::from([focus]),
            task: TaskKind::DetectBugs,
            now,
            edit_window_ms: WINDOW_MS,
        };
        let got: Vec<_> = retrieve(&g, &query, k, usize::MAX / 8, ScoreCoeffs::default())
            .expect("retrieve")
            .into_iter()
            .map(|s| s.node_id)
            .collect();
        if got != oracle_top_k(&g, focus, now, k) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/1000 graphs disagree with the brute-force oracle"))
}

fn p2_propagation_locality() -> Outcome {
    let mut moved_far = 0;
    let mut worst_norm: f64 = 0.0;
    for seed in 0..500 {
        let mut r = rng(20_000 + seed);
        let (mut g, now) = random_graph(&mut r, 40);
        let ids: Vec<_> = g.ids().collect();
        let changed: BTreeSet<_> = (0..r.gen_range(1..=4)).map(|_| ids[r.gen_range(0..ids.len())]).collect();
        let params = PropagationParams {
            alpha: r.gen_range(0.05..0.95),
            max_hops: r.gen_range(0..=3),
        };
        let before = g.clone();
        propagate(&mut g, &changed, &params, &FactorWeights::default(), now, WINDOW_MS);
        let dist = bfs(&before, &changed.iter().copied().collect::<Vec<_>>());
        for n in g.nodes() {
            if dist.get(&n.id).is_none_or(|d| *d > params.max_hops)
                && n.embedding.as_slice() != before.node(n.id).unwrap().embedding.as_slice()
            {
                moved_far += 1;
            }
            if !n.embedding.is_zero() {
                worst_norm = worst_norm.max((n.embedding.norm() - 1.0).abs());
            }
        }
    }
    outcome(
        moved_far == 0 && worst_norm <= 1e-6,
        format!("{moved_far} far nodes changed, worst |norm - 1| = {worst_norm:.2e} (tol 1e-6)"),
    )
}

fn p3_replay() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let layout = Layout::new(dir.path());
    let mut differing = 0;
    for seed in 0..100 {
        let mut r = rng(30_000 + seed);
        let nodes = r.gen_range(1..25);
        let extra = r.gen_range(0..60);
        let events = random_events(&mut r, nodes, extra);
        let mut live = CodeGraph::new();
        let mut log = JsonlWriter::open(&layout.events(), true).expect("log");
        for e in &events {
            apply_and_propagate(&mut live, e, &rules(), &settings()).expect("valid event");
            log.append(e).expect("append");
        }
        drop(log);
        let replayed = build(&read_events(&layout).expect("read log"));
        if replayed != live {
            differing += 1;
        }
    }
    outcome(differing == 0, format!("{differing}/100 replays differ from the live graph"))
}

fn local_corpus() -> Corpus {
    let spec = FaultSpec {
        local: 20,
        xfile: 0,
        mutants: true,
    };
    Corpus::generate(4, 20, spec).expect("corpus")
}

fn p4_local_detection() -> Outcome {
    let corpus = local_corpus();
    if let Err(e) = corpus.validate() {
        return outcome(false, format!("corpus invalid: {e}"));
    }
    let files = corpus.manifest.faulty_paths().len();
    match run_experiment(&corpus, &EngineConfig::default(), BenchMode::WithContext, TimingMode::Off) {
        Ok(row) => outcome(
            row.detection_accuracy == 1.0 && corpus.manifest.entries.len() == 20,
            format!(
                "detection accuracy {:.3} over {} LOCAL faults in {files} files (want 1.0)",
                row.detection_accuracy, row.faults
            ),
        ),
        Err(e) => outcome(false, format!("experiment failed: {e}")),
    }
}

fn p5_cross_file() -> Outcome {
    let spec = FaultSpec {
        local: 0,
        xfile: 20,
        mutants: false,
    };
    let corpus = match Corpus::generate(5, 24, spec) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("corpus: {e}")),
    };
    if let Err(e) = corpus.validate() {
        return outcome(false, format!("corpus invalid: {e}"));
    }
    let run = || compare(&corpus, &EngineConfig::default(), TimingMode::Off);
    let (first, second) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("experiment failed: {e}")),
    };
    let with = first.row(BenchMode::WithContext).expect("proposed row").cross_file_accuracy;
    let without = first.row(BenchMode::NoContext).expect("baseline row").cross_file_accuracy;
    let deterministic = first.to_json() == second.to_json();
    outcome(
        with >= 0.8 && without <= 0.2 && with > without && deterministic,
        format!(
            "with_context {with:.3} (>= 0.8), no_context {without:.3} (<= 0.2), {} files, deterministic: {deterministic}",
            corpus.files.len()
        ),
    )
}

fn p6_coverage_oracle() -> Outcome {
    let mut bad = 0;
    for seed in 0..200 {
        let mut r = rng(60_000 + seed);
        let (g, now) = random_graph(&mut r, 30);
        let q = [0.1, 0.2, 0.35, 0.5, 1.0][r.gen_range(0..5)];
        let got = coverage_report(&g, q, now, WINDOW_MS).expect("report");
        let want = oracle_coverage(&g, q, now);
        let sources = g.nodes().filter(|n| n.kind == ctt_core::codegraph::NodeKind::Source).count();
        let size_ok = sources == 0 || got.critical_set.len() == (q * sources as f64).ceil() as usize;
        let covered: BTreeSet<_> = got.per_node_covered.iter().filter(|(_, c)| **c).map(|(id, _)| *id).collect();
        if !(size_ok
            && got.critical_set == want.critical_set
            && got.overall == want.overall
            && got.critical == want.critical
            && covered == want.covered)
        {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad}/200 graphs disagree with the reachability oracle"))
}

fn p7_convergence() -> Outcome {
    let corpus = local_corpus();
    let dir = tempfile::tempdir().expect("tempdir");
    corpus.write_to(dir.path()).expect("write corpus");
    let config = EngineConfig {
        auto_accept: true,
        ..EngineConfig::default()
    };
    let clock = Arc::new(ManualClock::new(BENCH_EPOCH));
    let (mut engine, _) = Engine::builder(dir.path())
        .config(config.clone())
        .backend(Arc::new(MockBackend))
        .clock(clock.clone())
        .persist(false)
        .init()
        .expect("engine");

    let at = clock.advance_millis(config.debounce_ms as i64 + 1);
    let graph = engine.graph();
    for path in corpus.manifest.faulty_paths() {
        let node = graph.node_by_path(path).expect("indexed");
        engine.submit(PendingChange {
            at,
            path: path.to_string(),
            change: Change::FileEdited {
                content: node.text.clone(),
                line_start: 1,
                line_end: node.line_count.max(1),
            },
        });
    }
    let limit = 20;
    let mut cycles = 0;
    let markers_left = |root: &std::path::Path| {
        corpus
            .files
            .keys()
            .filter(|p| has_marker(&fs::read_to_string(root.join(p)).unwrap_or_default()))
            .count()
    };
    loop {
        clock.advance_millis(config.debounce_ms as i64 + 1);
        engine.run_cycle().expect("cycle");
        cycles += 1;
        let pending = engine.suggestions().count(SuggestionStatus::Pending);
        if !engine.has_follow_ups() && pending == 0 && markers_left(dir.path()) == 0 {
            break;
        }
        if cycles >= limit {
            break;
        }
    }
    let markers = markers_left(dir.path());
    let pending = engine.suggestions().count(SuggestionStatus::Pending);
    outcome(
        markers == 0 && pending == 0 && cycles <= limit,
        format!("{cycles} cycles (limit {limit}), {markers} markers and {pending} pending suggestions left"),
    )
}

fn p8_prompts() -> Outcome {
    let mut drifted = Vec::new();
    let mut incomplete = Vec::new();
    for (name, prompt) in goldens::scenarios() {
        let json = prompt.to_json();
        match fs::read_to_string(goldens::dir().join(format!("{name}.json"))) {
            Ok(golden) if golden == json => {}
            _ => drifted.push(name),
        }
        let value: serde_json::Value = serde_json::from_str(&json).expect("prompt JSON");
        let keys: Vec<&str> = value.as_object().expect("object").keys().map(String::as_str).collect();
        let ordered = ["\"context\":", "\"history\":", "\"question\":", "\"config\":"]
            .map(|k| json.find(k).unwrap_or(usize::MAX));
        let in_order = ordered.windows(2).all(|w| w[0] < w[1]) && json.starts_with("{\"context\":");
        if keys.len() != 4 || !in_order {
            incomplete.push(name);
        }
    }

    let mut over_budget = 0;
    let mut sliced = 0;
    for seed in 0..1000 {
        let mut r = rng(80_000 + seed);
        let snippets: Vec<RankedSnippet> = (0..r.gen_range(0..15))
            .map(|i| RankedSnippet {
                node_id: ctt_core::codegraph::NodeId(i),
                path: format!("src/f{i}.swift"),
                score: r.gen_range(0.0..1.0),
                text: "ab\"é\n".repeat(r.gen_range(0..300)),
                line_range: (1, 9),
            })
            .collect();
        let history: Vec<HistoryEntry> = (0..r.gen_range(0..15))
            .map(|i| HistoryEntry {
                role: if i % 2 == 0 { Role::User } else { Role::Copilot },
                content: "h\\".repeat(r.gen_range(0..400)),
                at: Timestamp(i64::from(i)),
            })
            .collect();
        let task = TaskKind::ALL[r.gen_range(0..TaskKind::ALL.len())];
        let budget = r.gen_range(100..3000);
        let focus = Focus {
            path: "src/f0.swift".into(),
            line: r.gen_range(1..100),
        };
        match construct_prompt(&snippets, &history, task, &focus, &PromptConfig::default(), budget) {
            Ok(p) => {
                if p.token_estimate() > budget {
                    over_budget += 1;
                }
                if p.context.snippets.iter().any(|s| !snippets.iter().any(|o| o.text == s.text)) {
                    sliced += 1;
                }
            }
            Err(ctt_core::Error::Budget { .. }) => {}
            Err(_) => over_budget += 1,
        }
    }
    outcome(
        drifted.is_empty() && incomplete.is_empty() && over_budget == 0 && sliced == 0,
        format!(
            "5 goldens: drifted {drifted:?}, incomplete {incomplete:?}; 1000 random inputs: {over_budget} over budget, {sliced} sliced snippets"
        ),
    )
}

fn p9_performance() -> Outcome {
    let corpus = match Corpus::generate(9, 1000, FaultSpec::default()) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("corpus: {e}")),
    };
    let dir = tempfile::tempdir().expect("tempdir");
    corpus.write_to(dir.path()).expect("write corpus");
    let clock = Arc::new(ManualClock::new(BENCH_EPOCH));
    let started = Instant::now();
    let (engine, _) = Engine::builder(dir.path())
        .config(EngineConfig::default())
        .backend(Arc::new(MockBackend))
        .clock(clock.clone())
        .persist(false)
        .init()
        .expect("index");
    let index_time = started.elapsed();
    let indexed = engine.graph().len();

    let mut graph = (*engine.graph()).clone();
    let targets: Vec<String> = graph
        .nodes()
        .filter(|n| graph.degree(n.id) <= 10)
        .map(|n| n.path.clone())
        .take(101)
        .collect();
    let mut samples = Vec::with_capacity(targets.len());
    for (i, path) in targets.iter().enumerate() {
        let node = graph.node_by_path(path).expect("target");
        let content = format!("{}// touched {i}\n", node.text);
        let event = ChangeEvent {
            seq: graph.last_seq() + 1,
            at: BENCH_EPOCH.plus_millis(1_000 + i as i64),
            path: path.clone(),
            change: Change::FileEdited {
                line_start: node.line_count + 1,
                line_end: node.line_count + 1,
                content,
            },
        };
        let t = Instant::now();
        apply_and_propagate(&mut graph, &event, &rules(), &settings()).expect("update");
        samples.push(t.elapsed());
    }
    samples.sort();
    let median = samples[samples.len() / 2];

    // The bench harness reports time per bug from the pipeline alone.
    let small = Corpus::generate(
        9,
        10,
        FaultSpec {
            local: 4,
            xfile: 0,
            mutants: false,
        },
    )
    .expect("corpus");
    let timed = run_experiment(&small, &EngineConfig::default(), BenchMode::WithContext, TimingMode::Pipeline);
    let per_bug = timed.ok().and_then(|row| row.median_time_per_bug_ms);

    outcome(
        indexed == 1000 && index_time < Duration::from_secs(10) && median < Duration::from_millis(50) && per_bug.is_some(),
        format!(
            "indexed {indexed} files in {:.2} s (< 10 s); median update {:.2} ms over {} changes (< 50 ms); bench time per bug {}",
            secs(index_time),
            secs(median) * 1000.0,
            samples.len(),
            per_bug.map_or("missing".to_string(), |ms| format!("{ms:.3} ms (backend excluded)"))
        ),
    )
}

fn p10_metrics() -> Outcome {
    let rate = acceptance_rate(15, 47);
    let empty_rate = acceptance_rate(0, 0);
    let draft = |fault: &str| SuggestionDraft {
        kind: SuggestionKind::BugFix,
        path: "a".into(),
        line_start: 1,
        line_end: 1,
        fault_id: Some(fault.into()),
        patch: String::new(),
        explanation: String::new(),
        confidence: 1.0,
    };
    let vacuous = detection_accuracy(std::iter::empty(), &[draft("F1")]);
    let zero = detection_accuracy(["F1", "F2"], &[draft("F9")]);
    let all = detection_accuracy(["F1", "F2"], &[draft("F2"), draft("F1")]);
    let ok = (rate.value - 0.319).abs() <= 0.0005
        && empty_rate.value == 0.0
        && empty_rate.warning.is_some()
        && vacuous.value == 1.0
        && vacuous.warning.is_some()
        && zero.value == 0.0
        && all.value == 1.0
        && acceptance_rate(5, 20).value == 0.25;
    outcome(
        ok,
        format!(
            "acceptance_rate(15, 47) = {:.4} (0.319 +/- 0.0005); empty log {} flagged; empty manifest {} flagged; none matched {}",
            rate.value, empty_rate.value, vacuous.value, zero.value
        ),
    )
}

/// Id, name, time limit in seconds, check.
type Criterion = (&'static str, &'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("P1", "retrieval oracle equivalence", 10, p1_retrieval_oracle),
        ("P2", "propagation locality and norm", 10, p2_propagation_locality),
        ("P3", "replay determinism", 10, p3_replay),
        ("P4", "local detection", 5, p4_local_detection),
        ("P5", "cross-file detection direction", 10, p5_cross_file),
        ("P6", "critical coverage oracle", 10, p6_coverage_oracle),
        ("P7", "self-healing convergence", 10, p7_convergence),
        ("P8", "prompt goldens and budget", 5, p8_prompts),
        ("P9", "performance", 60, p9_performance),
        ("P10", "metric formulas", 1, p10_metrics),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.eq_ignore_ascii_case(f)) {
            continue;
        }
        let started = Instant::now();
        let result = run();
        let elapsed = started.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id} {name}: {} [{:.2} s, limit {limit} s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            secs(elapsed)
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
