use super::*;
use crate::codegraph::Change;

const NOW: Timestamp = Timestamp(1_000_000);

fn settings() -> EmbedSettings {
    EmbedSettings::default()
}

fn create(g: &mut CodeGraph, path: &str, content: &str) -> NodeId {
    let event = ChangeEvent {
        seq: g.last_seq() + 1,
        at: NOW,
        path: path.into(),
        change: Change::FileCreated { content: content.into() },
    };
    apply_and_propagate(g, &event, &GraphRules::default(), &settings()).unwrap();
    g.id_of(path).unwrap()
}

fn embed(g: &CodeGraph, id: NodeId) -> ContextEmbedding {
    embed_node(g, id, &FactorWeights::default(), NOW, settings().edit_window_ms).unwrap()
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn assert_close(a: &[f64], b: &[f64]) {
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

/// s1 - s2 - s3 - s4 - s5 as an import chain.
fn chain() -> (CodeGraph, Vec<NodeId>) {
    let mut g = CodeGraph::new();
    let ids = (1..=5)
        .map(|i| {
            let body = if i < 5 {
                format!("import s{}\nfunc f{i}() {{ return {i} }}\n", i + 1)
            } else {
                "func f5() { return 5 }\n".to_string()
            };
            create(&mut g, &format!("s{i}.swift"), &body)
        })
        .collect::<Vec<_>>();
    (g, ids)
}

#[test]
fn empty_isolated_node_embeds_to_zero() {
    let mut g = CodeGraph::new();
    let id = create(&mut g, "empty.swift", "");
    assert!(embed(&g, id).is_zero());
    assert!(g.node(id).unwrap().embedding.is_zero());
}

#[test]
fn non_degenerate_nodes_are_unit_length() {
    let mut g = CodeGraph::new();
    let a = create(&mut g, "a.py", "import b\nx = 1\n");
    let b = create(&mut g, "b.py", "y");
    for id in [a, b] {
        assert!((embed(&g, id).norm() - 1.0).abs() < 1e-6);
        assert!((g.node(id).unwrap().embedding.norm() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn path_alone_separates_identical_files() {
    let mut g = CodeGraph::new();
    let body = "func same() { return 1 }\n";
    let a = create(&mut g, "left/a.swift", body);
    let b = create(&mut g, "right/b.swift", body);
    let (ea, eb) = (embed(&g, a), embed(&g, b));
    assert_eq!(ea.as_slice()[..192], eb.as_slice()[..192]);
    assert!(ea.cosine(&eb) < 1.0);
}

#[test]
fn empty_change_set_touches_nothing() {
    let (mut g, _) = chain();
    let before = g.clone();
    let out = propagate(
        &mut g,
        &BTreeSet::new(),
        &PropagationParams::default(),
        &FactorWeights::default(),
        NOW,
        settings().edit_window_ms,
    );
    assert!(out.is_empty());
    assert_eq!(g, before);
}

#[test]
fn chain_blend_follows_the_hop_weights() {
    let (mut g, ids) = chain();
    // Rewrite s2 without propagating, then propagate by hand.
    let edit = ChangeEvent {
        seq: g.last_seq() + 1,
        at: NOW,
        path: "s2.swift".into(),
        change: Change::FileEdited {
            content: "import s3\nfunc changed() { return 42 * 7 }\n".into(),
            line_start: 2,
            line_end: 2,
        },
    };
    let changed = g.apply_change(&edit, &GraphRules::default()).unwrap();
    assert_eq!(changed, BTreeSet::from([ids[1]]));
    let before: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| g.node(*id).unwrap().embedding.as_slice().to_vec())
        .collect();
    let fresh = embed(&g, ids[1]).as_slice().to_vec();

    let rewritten = propagate(
        &mut g,
        &changed,
        &PropagationParams { alpha: 0.5, max_hops: 2 },
        &FactorWeights::default(),
        NOW,
        settings().edit_window_ms,
    );
    assert_eq!(rewritten, ids[..4].iter().copied().collect());

    let blend = |old: &[f64], w: f64| -> Vec<f64> {
        normalize(old.iter().zip(&fresh).map(|(o, m)| (1.0 - w) * o + w * m).collect())
    };
    let after = |i: usize| g.node(ids[i]).unwrap().embedding.as_slice().to_vec();
    assert_close(&after(1), &fresh);
    assert_close(&after(0), &blend(&before[0], 0.5));
    assert_close(&after(2), &blend(&before[2], 0.5));
    assert_close(&after(3), &blend(&before[3], 0.25));
    assert_eq!(after(4), before[4]);

    // Displacement shrinks with distance along the chain.
    let moved = |i: usize| -> f64 {
        after(i).iter().zip(&before[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    assert!(moved(2) >= moved(3));
}

#[test]
fn equidistant_sources_blend_their_mean() {
    // a and c both import b.
    let build = |first: &str, second: &str| {
        let mut g = CodeGraph::new();
        create(&mut g, "b.swift", "func shared() {}\n");
        create(&mut g, first, "import b\nfunc one() { return 1 }\n");
        create(&mut g, second, "import b\nfunc two() { return 2 }\n");
        g
    };
    let run = |mut g: CodeGraph| {
        let sources: BTreeSet<NodeId> = ["a.swift", "c.swift"].map(|p| g.id_of(p).unwrap()).into();
        let b = g.id_of("b.swift").unwrap();
        let old = g.node(b).unwrap().embedding.as_slice().to_vec();
        let mean: Vec<f64> = {
            let ea = embed(&g, g.id_of("a.swift").unwrap());
            let ec = embed(&g, g.id_of("c.swift").unwrap());
            ea.as_slice().iter().zip(ec.as_slice()).map(|(x, y)| (x + y) / 2.0).collect()
        };
        propagate(
            &mut g,
            &sources,
            &PropagationParams::default(),
            &FactorWeights::default(),
            NOW,
            settings().edit_window_ms,
        );
        let expected = normalize(old.iter().zip(&mean).map(|(o, m)| 0.5 * o + 0.5 * m).collect());
        let got = g.node(b).unwrap().embedding.as_slice().to_vec();
        assert_close(&got, &expected);
        got
    };
    // Swapping which file gets the lower id leaves b's result unchanged.
    let one = run(build("a.swift", "c.swift"));
    let mut g = CodeGraph::new();
    create(&mut g, "b.swift", "func shared() {}\n");
    create(&mut g, "c.swift", "import b\nfunc two() { return 2 }\n");
    create(&mut g, "a.swift", "import b\nfunc one() { return 1 }\n");
    let two = run(g);
    assert_close(&one, &two);
}

#[test]
fn bug_factor_drops_after_accepted_fix() {
    let mut g = CodeGraph::new();
    create(&mut g, "a.swift", "func a() {}\n");
    let at = NOW.plus_millis(10);
    let detected = ChangeEvent {
        seq: g.last_seq() + 1,
        at,
        path: "a.swift".into(),
        change: Change::BugDetected {
            suggestion_id: "s1".into(),
            fault_id: None,
        },
    };
    apply_and_propagate(&mut g, &detected, &GraphRules::default(), &settings()).unwrap();
    let bug_before = g.node_by_path("a.swift").unwrap().embedding.get(BUG_DIM);
    assert!(bug_before > 0.0);

    let version = g.version();
    let stats = absorb_feedback(&mut g, &GraphRules::default(), "a.swift", Feedback::Rejected, &settings()).unwrap();
    assert_eq!((stats.open_bug_count, g.version()), (1, version));

    let fix = ChangeEvent {
        seq: g.last_seq() + 1,
        at,
        path: "a.swift".into(),
        change: Change::SuggestionApplied {
            suggestion_id: "s1".into(),
            bug_fix: true,
            content: "func a() { }\n".into(),
            line_start: 1,
            line_end: 1,
        },
    };
    let stats = absorb_feedback(
        &mut g,
        &GraphRules::default(),
        "a.swift",
        Feedback::Accepted(&fix),
        &settings(),
    )
    .unwrap();
    assert_eq!((stats.open_bug_count, stats.resolved_bug_count), (0, 1));
    assert!(g.node_by_path("a.swift").unwrap().embedding.get(BUG_DIM) < bug_before);

    assert!(matches!(
        absorb_feedback(&mut g, &GraphRules::default(), "ghost.swift", Feedback::Accepted(&fix), &settings()),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn bug_factor_formula() {
    let stats = NodeStats {
        open_bug_count: 3,
        last_bug_at: Some(NOW),
        ..NodeStats::default()
    };
    assert!((bug_factor(&stats, NOW) - 0.5).abs() < 1e-12);
    let week = NOW.plus_millis(604_800_000);
    assert!((bug_factor(&stats, week) - 0.5 * (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(bug_factor(&NodeStats::default(), NOW), 0.0);
}

#[test]
fn serialized_embeddings_keep_unit_norm() {
    let (g, ids) = chain();
    let e = &g.node(ids[2]).unwrap().embedding;
    let text = serde_json::to_string(e).unwrap();
    let back: ContextEmbedding = serde_json::from_str(&text).unwrap();
    assert!((back.norm() - 1.0).abs() < 1e-6);
    assert!(serde_json::from_str::<ContextEmbedding>("[1.0, 2.0]").is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(PropagationParams { alpha: 1.0, max_hops: 2 }.validate().is_err());
    assert!(PropagationParams { alpha: 0.0, max_hops: 2 }.validate().is_err());
    let zero = FactorWeights {
        content: 0.0,
        path: 0.0,
        cursor: 0.0,
        bug: 0.0,
        conn: 0.0,
    };
    assert!(zero.validate().is_err());
    assert!(FactorWeights { bug: -1.0, ..FactorWeights::default() }.validate().is_err());
    assert!(FactorWeights::default().validate().is_ok());
}
