//! Shared generators and brute-force oracles for the integration tests.
//!
//! The oracles recompute everything from the raw node fields and the edge
//! list, without calling the engine's scoring, BFS or coverage code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ctt_core::codegraph::{Change, ChangeEvent, CodeGraph, GraphRules, NodeId, NodeKind};
use ctt_core::embedding::{apply_and_propagate, EmbedSettings};
use ctt_core::time::Timestamp;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const START: Timestamp = Timestamp(1_700_000_000_000);
pub const WINDOW_MS: i64 = 24 * 60 * 60 * 1000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: [&str; 12] = [
    "value", "count", "total", "index", "buffer", "state", "limit", "user", "cache", "node", "path", "score",
];

fn path_for(i: usize, test: bool) -> String {
    if test {
        format!("tests/m{i:02}_test.swift")
    } else {
        format!("src/m{i:02}.swift")
    }
}

/// Random file body importing some of `0..universe` by module name.
pub fn random_body(rng: &mut ChaCha8Rng, universe: usize) -> String {
    let mut out = String::new();
    let imports = rng.gen_range(0..=3.min(universe));
    for _ in 0..imports {
        out.push_str(&format!("import m{:02}\n", rng.gen_range(0..universe)));
    }
    for f in 0..rng.gen_range(0..4) {
        let a = WORDS.choose(rng).unwrap();
        let b = WORDS.choose(rng).unwrap();
        out.push_str(&format!("func {a}_{f}() {{ return {b} + {} }}\n", rng.gen_range(0..100)));
    }
    out
}

/// A valid event sequence: `nodes` creations, then `extra` mixed events
/// that never target a missing path.
pub fn random_events(rng: &mut ChaCha8Rng, nodes: usize, extra: usize) -> Vec<ChangeEvent> {
    let universe = nodes + 4;
    let mut live: BTreeSet<String> = BTreeSet::new();
    let mut events = Vec::new();
    let mut at = START;
    let push = |events: &mut Vec<ChangeEvent>, at: &mut Timestamp, rng: &mut ChaCha8Rng, path: String, change| {
        *at = at.plus_millis(rng.gen_range(0..600_000));
        events.push(ChangeEvent {
            seq: events.len() as u64 + 1,
            at: *at,
            path,
            change,
        });
    };

    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    for i in order {
        let path = path_for(i, rng.gen_bool(0.2));
        if live.insert(path.clone()) {
            let content = random_body(rng, universe);
            push(&mut events, &mut at, rng, path, Change::FileCreated { content });
        }
    }

    for _ in 0..extra {
        let existing: Vec<String> = live.iter().cloned().collect();
        let pick = existing.choose(rng).cloned();
        let roll = rng.gen_range(0..8);
        match (roll, pick) {
            (0, _) | (_, None) => {
                let path = path_for(rng.gen_range(0..universe), rng.gen_bool(0.2));
                if live.insert(path.clone()) {
                    let content = random_body(rng, universe);
                    push(&mut events, &mut at, rng, path, Change::FileCreated { content });
                }
            }
            (1, Some(path)) => {
                live.remove(&path);
                push(&mut events, &mut at, rng, path, Change::FileDeleted);
            }
            (2 | 3, Some(path)) => {
                let content = random_body(rng, universe);
                let line_start = rng.gen_range(1..5);
                let line_end = line_start + rng.gen_range(0..3);
                push(
                    &mut events,
                    &mut at,
                    rng,
                    path,
                    Change::FileEdited {
                        content,
                        line_start,
                        line_end,
                    },
                );
            }
            (4, Some(path)) => {
                let line = rng.gen_range(1..10);
                push(&mut events, &mut at, rng, path, Change::CursorMoved { line });
            }
            (5, Some(path)) => {
                let change = Change::BugDetected {
                    suggestion_id: format!("s{}", events.len()),
                    fault_id: None,
                };
                push(&mut events, &mut at, rng, path, change);
            }
            (6, Some(_)) => {
                let covered: Vec<String> = existing.choose_multiple(rng, 2).cloned().collect();
                let change = Change::TestResult {
                    passed: rng.gen_bool(0.5),
                    covered_paths: covered,
                };
                push(&mut events, &mut at, rng, String::new(), change);
            }
            (_, Some(path)) => {
                let change = Change::SuggestionApplied {
                    suggestion_id: format!("s{}", events.len()),
                    bug_fix: rng.gen_bool(0.7),
                    content: random_body(rng, universe),
                    line_start: 1,
                    line_end: 1,
                };
                push(&mut events, &mut at, rng, path, change);
            }
        }
    }
    events
}

pub fn rules() -> GraphRules {
    ctt_core::EngineConfig::default().graph_rules().unwrap()
}

pub fn settings() -> EmbedSettings {
    EmbedSettings::default()
}

pub fn build(events: &[ChangeEvent]) -> CodeGraph {
    let mut g = CodeGraph::new();
    let rules = rules();
    for e in events {
        apply_and_propagate(&mut g, e, &rules, &settings()).unwrap();
    }
    g
}

/// A random graph with at most `max_nodes` nodes plus the time of its last event.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> (CodeGraph, Timestamp) {
    let nodes = rng.gen_range(1..=max_nodes);
    let extra = rng.gen_range(0..=nodes);
    let mut events = random_events(rng, nodes, extra);
    // Deletions may empty the graph; keep at least one node around.
    let g = build(&events);
    if g.is_empty() {
        let at = events.last().map_or(START, |e| e.at);
        events.push(ChangeEvent {
            seq: events.len() as u64 + 1,
            at,
            path: "src/solo.swift".into(),
            change: Change::FileCreated {
                content: "func solo() {}\n".into(),
            },
        });
        return (build(&events), at);
    }
    let now = events.last().map_or(START, |e| e.at);
    (g, now)
}

// ---- oracles ----

pub fn adjacency(g: &CodeGraph) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = g.ids().map(|id| (id, BTreeSet::new())).collect();
    for (a, b) in g.edges() {
        adj.get_mut(&a).unwrap().insert(b);
        adj.get_mut(&b).unwrap().insert(a);
    }
    adj
}

pub fn bfs(g: &CodeGraph, sources: &[NodeId]) -> BTreeMap<NodeId, u32> {
    let adj = adjacency(g);
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in sources {
        dist.insert(*s, 0);
        queue.push_back(*s);
    }
    while let Some(u) = queue.pop_front() {
        for v in &adj[&u] {
            if !dist.contains_key(v) {
                dist.insert(*v, dist[&u] + 1);
                queue.push_back(*v);
            }
        }
    }
    dist
}

pub fn oracle_centrality(g: &CodeGraph, id: NodeId) -> f64 {
    let n = g.len();
    if n <= 1 {
        return 0.0;
    }
    let degree = g.edges().filter(|(a, b)| *a == id || *b == id).count();
    degree as f64 / (2.0 * (n - 1) as f64)
}

pub fn oracle_criticality(g: &CodeGraph, now: Timestamp) -> BTreeMap<NodeId, f64> {
    let raw: BTreeMap<NodeId, f64> = g
        .nodes()
        .map(|n| {
            if n.kind == NodeKind::Test {
                return (n.id, 0.0);
            }
            let bugs = (n.stats.open_bug_count + n.stats.resolved_bug_count) as f64;
            let bug_term = ((1.0 + bugs).log2() / 4.0).min(1.0);
            let edits = n
                .stats
                .edit_times
                .iter()
                .filter(|t| t.millis() > now.millis() - WINDOW_MS && t.millis() <= now.millis())
                .count() as f64;
            let change_term = ((1.0 + edits).log2() / 8.0).min(1.0);
            (n.id, 0.4 * bug_term + 0.3 * change_term + 0.3 * oracle_centrality(g, n.id))
        })
        .collect();
    let max = raw.values().fold(0.0_f64, |m, v| m.max(*v));
    raw.into_iter()
        .map(|(id, r)| (id, if max > 0.0 { r / max } else { 0.0 }))
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Every node's score against `focus`.
pub fn oracle_scores(g: &CodeGraph, focus: NodeId, now: Timestamp) -> BTreeMap<NodeId, f64> {
    let dist = bfs(g, &[focus]);
    let crit = oracle_criticality(g, now);
    let ef = g.node(focus).unwrap().embedding.as_slice();
    g.nodes()
        .map(|n| {
            let sim = cosine(ef, n.embedding.as_slice()).max(0.0);
            let prox = dist.get(&n.id).map_or(0.0, |d| 1.0 / (1.0 + f64::from(*d)));
            (n.id, 0.60 * sim + 0.25 * prox + 0.15 * crit[&n.id])
        })
        .collect()
}

/// Focus first, then the full sort by (score desc, id asc), cut to `k`.
pub fn oracle_top_k(g: &CodeGraph, focus: NodeId, now: Timestamp, k: usize) -> Vec<NodeId> {
    let scores = oracle_scores(g, focus, now);
    let mut rest: Vec<(NodeId, f64)> = scores.into_iter().filter(|(id, _)| *id != focus).collect();
    rest.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    std::iter::once(focus).chain(rest.into_iter().map(|(id, _)| id)).take(k).collect()
}

pub struct OracleCoverage {
    pub overall: f64,
    pub critical: f64,
    pub critical_set: Vec<NodeId>,
    pub covered: BTreeSet<NodeId>,
}

pub fn oracle_coverage(g: &CodeGraph, q: f64, now: Timestamp) -> OracleCoverage {
    let sources: Vec<NodeId> = g.nodes().filter(|n| n.kind == NodeKind::Source).map(|n| n.id).collect();
    let edges: Vec<(NodeId, NodeId)> = g.edges().collect();
    let mut covered = BTreeSet::new();
    for t in g.nodes().filter(|n| n.kind == NodeKind::Test) {
        // All walks of length one or two along outgoing edges.
        for (a, b) in &edges {
            if *a != t.id {
                continue;
            }
            covered.insert(*b);
            for (c, d) in &edges {
                if c == b && *d != t.id {
                    covered.insert(*d);
                }
            }
        }
    }
    covered.retain(|id| sources.contains(id));
    if sources.is_empty() {
        return OracleCoverage {
            overall: 0.0,
            critical: 0.0,
            critical_set: Vec::new(),
            covered,
        };
    }
    let crit = oracle_criticality(g, now);
    let mut ranked = sources.clone();
    ranked.sort_by(|a, b| crit[b].partial_cmp(&crit[a]).unwrap().then(a.cmp(b)));
    let size = (q * sources.len() as f64).ceil() as usize;
    let mut critical_set: Vec<NodeId> = ranked.into_iter().take(size).collect();
    critical_set.sort();
    let hit = critical_set.iter().filter(|id| covered.contains(id)).count();
    OracleCoverage {
        overall: covered.len() as f64 / sources.len() as f64,
        critical: hit as f64 / critical_set.len() as f64,
        critical_set,
        covered,
    }
}

// ---- golden prompt scenarios ----

pub mod goldens {
    use std::path::PathBuf;

    use ctt_core::codegraph::NodeId;
    use ctt_core::prompt::{construct_prompt, Focus, HistoryEntry, Prompt, PromptConfig, Role, TaskKind};
    use ctt_core::retrieval::RankedSnippet;
    use ctt_core::time::Timestamp;

    pub fn dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/prompts")
    }

    fn snippet(id: u32, path: &str, range: (u32, u32), score: f64, text: &str) -> RankedSnippet {
        RankedSnippet {
            node_id: NodeId(id),
            path: path.into(),
            score,
            text: text.into(),
            line_range: range,
        }
    }

    fn said(role: Role, at: i64, content: &str) -> HistoryEntry {
        HistoryEntry {
            role,
            content: content.into(),
            at: Timestamp(at),
        }
    }

    /// The five checked-in scenarios as `(file stem, prompt)`.
    pub fn scenarios() -> Vec<(&'static str, Prompt)> {
        let config = PromptConfig::default();
        let a = "import b\nfunc a() {\n    return b() - 1 /* FAULT:F1:LOCAL */\n}\n";
        let b = "func b() {\n    return 2\n}\n";
        let test = "@testable import a\n\nfunc test_a() {\n}\n";
        let focus = |path: &str, line| Focus {
            path: path.into(),
            line,
        };

        let minimal = construct_prompt(&[], &[], TaskKind::DetectBugs, &focus("src/a.swift", 1), &config, 8000);

        let detect = construct_prompt(
            &[
                snippet(0, "src/a.swift", (1, 4), 0.85, a),
                snippet(1, "src/b.swift", (1, 3), 0.51, b),
                snippet(2, "tests/a_test.swift", (1, 4), 0.33, test),
            ],
            &[
                said(Role::User, 1_700_000_000_000, "complete_code src/a.swift:2"),
                said(Role::Copilot, 1_700_000_000_500, "{\"suggestions\":[]}"),
            ],
            TaskKind::DetectBugs,
            &focus("src/a.swift", 3),
            &config,
            8000,
        );

        // Only part of the context fits; later snippets are dropped whole.
        let long: String = (1..=30).map(|i| format!("let v{i} = {i}\n")).collect();
        let tight = construct_prompt(
            &[
                snippet(4, "src/m.py", (1, 30), 0.9, &long),
                snippet(5, "src/n.py", (1, 30), 0.7, &long),
                snippet(6, "src/o.py", (1, 1), 0.2, "x = 1\n"),
            ],
            &[],
            TaskKind::GenerateTests,
            &focus("src/m.py", 1),
            &config,
            330,
        );

        // More history than fits: the newest entries survive, in order.
        let history: Vec<HistoryEntry> = (0..12)
            .map(|i| {
                let role = if i % 2 == 0 { Role::User } else { Role::Copilot };
                said(role, 1_700_000_000_000 + i * 1000, &format!("exchange {i}: {}", "detail ".repeat(8)))
            })
            .collect();
        let windowed = construct_prompt(
            &[snippet(7, "src/lib.rs", (10, 12), 0.6, "fn f() -> u8 {\n    1\n}\n")],
            &history,
            TaskKind::AnalyzeTestResults,
            &focus("src/lib.rs", 11),
            &config,
            420,
        );

        let escapes = construct_prompt(
            &[snippet(
                9,
                "src/héllo.ts",
                (1, 2),
                0.4,
                "const s = \"tab\\there\";\n// naïve — ünïcode ✓\n",
            )],
            &[said(Role::Copilot, 5, "rejected: \"quotes\" and \\ backslashes\n[outcome: rejected]")],
            TaskKind::CompleteCode,
            &focus("src/héllo.ts", 2),
            &PromptConfig {
                model: "chat-model".into(),
                temperature: 0.0,
                mode: "review".into(),
                max_tokens: 256,
                ..PromptConfig::default()
            },
            8000,
        );

        [
            ("minimal", minimal),
            ("detect_bugs_with_context", detect),
            ("generate_tests_tight_budget", tight),
            ("history_window", windowed),
            ("complete_code_escapes", escapes),
        ]
        .into_iter()
        .map(|(name, p)| (name, p.expect("scenario fits its budget")))
        .collect()
    }
}
