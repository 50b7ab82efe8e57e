mod common;

use std::fs;

use common::*;
use ctt_core::codegraph::CodeGraph;
use ctt_core::store::{load_snapshot, save_snapshot};
use ctt_core::Error;

#[test]
fn snapshots_reload_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    for seed in 0..20 {
        let (g, _) = random_graph(&mut rng(seed), 25);
        save_snapshot(&g, &path).unwrap();
        let back = load_snapshot(&path).unwrap();
        assert_eq!((back.version(), back.last_seq(), back.next_id()), (g.version(), g.last_seq(), g.next_id()));
        assert_eq!(back.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        for (a, b) in g.nodes().zip(back.nodes()) {
            assert_eq!((&a.path, &a.text, &a.stats, a.kind), (&b.path, &b.text, &b.stats, b.kind));
            assert_eq!(a.content_hash, b.content_hash);
            let drift = a
                .embedding
                .as_slice()
                .iter()
                .zip(b.embedding.as_slice())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(drift <= 1e-6, "seed {seed}: drift {drift}");
            if !b.embedding.is_zero() {
                assert!((b.embedding.norm() - 1.0).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn empty_graph_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    save_snapshot(&CodeGraph::new(), &path).unwrap();
    assert_eq!(load_snapshot(&path).unwrap(), CodeGraph::new());
}

#[test]
fn damaged_snapshots_are_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    let (g, _) = random_graph(&mut rng(3), 10);
    save_snapshot(&g, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();

    fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(matches!(load_snapshot(&path), Err(Error::Load { .. })));

    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["nodes"][0]["embedding"] = serde_json::json!([1.0, 2.0]);
    fs::write(&path, doc.to_string()).unwrap();
    match load_snapshot(&path) {
        Err(Error::Load { record, .. }) => assert_eq!(record, "nodes[0]"),
        other => panic!("{other:?}"),
    }

    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc.as_object_mut().unwrap().remove("version");
    fs::write(&path, doc.to_string()).unwrap();
    assert!(matches!(load_snapshot(&path), Err(Error::Load { .. })));

    assert!(load_snapshot(&dir.path().join("missing.json")).is_err());
}
