//! Criticality, overall and critical coverage, and the evaluation metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codegraph::{CodeGraph, NodeId, NodeKind};
use crate::error::{Error, Result};
use crate::gateway::{SuggestionDraft, SuggestionKind};
use crate::time::Timestamp;

/// Hops a test may be from the code it exercises.
pub const COVERAGE_HOPS: usize = 2;

/// Unnormalized importance: `0.4 bug + 0.3 change + 0.3 centrality`.
/// Test nodes score 0.
pub fn raw_criticality(graph: &CodeGraph, id: NodeId, now: Timestamp, edit_window_ms: i64) -> f64 {
    let Some(node) = graph.node(id) else {
        return 0.0;
    };
    if node.kind == NodeKind::Test {
        return 0.0;
    }
    let bugs = (node.stats.open_bug_count + node.stats.resolved_bug_count) as f64;
    let bug_term = ((1.0 + bugs).log2() / 4.0).min(1.0);
    let edits = node.stats.edit_count_window(now, edit_window_ms) as f64;
    let change_term = ((1.0 + edits).log2() / 8.0).min(1.0);
    let centrality = graph.centrality(id).unwrap_or(0.0);
    0.4 * bug_term + 0.3 * change_term + 0.3 * centrality
}

/// Criticality of every node, normalized by the maximum over source nodes.
pub fn criticality_table(
    graph: &CodeGraph,
    now: Timestamp,
    edit_window_ms: i64,
) -> BTreeMap<NodeId, f64> {
    let raw: BTreeMap<NodeId, f64> = graph
        .ids()
        .map(|id| (id, raw_criticality(graph, id, now, edit_window_ms)))
        .collect();
    let max = raw.values().copied().fold(0.0_f64, f64::max);
    raw.into_iter()
        .map(|(id, r)| (id, if max > 0.0 { r / max } else { 0.0 }))
        .collect()
}

pub fn criticality(
    graph: &CodeGraph,
    id: NodeId,
    now: Timestamp,
    edit_window_ms: i64,
) -> Result<f64> {
    if !graph.contains(id) {
        return Err(Error::NotFound(format!("node {id}")));
    }
    Ok(criticality_table(graph, now, edit_window_ms)[&id])
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub overall: f64,
    pub critical: f64,
    /// Top `ceil(q * |source|)` nodes by (score desc, id asc), sorted by id.
    pub critical_set: Vec<NodeId>,
    /// Source nodes only.
    pub per_node_covered: BTreeMap<NodeId, bool>,
}

/// Source nodes reachable from some test within [`COVERAGE_HOPS`] outgoing hops.
pub fn covered_sources(graph: &CodeGraph) -> BTreeSet<NodeId> {
    let mut covered = BTreeSet::new();
    for test in graph.nodes().filter(|n| n.kind == NodeKind::Test) {
        let mut frontier = vec![test.id];
        let mut seen = BTreeSet::from([test.id]);
        for _ in 0..COVERAGE_HOPS {
            let mut next = Vec::new();
            for u in frontier {
                for v in graph.successors(u) {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
            frontier = next;
            covered.extend(frontier.iter().copied());
        }
    }
    covered.retain(|id| graph.node(*id).is_some_and(|n| n.kind == NodeKind::Source));
    covered
}

pub fn coverage_report(
    graph: &CodeGraph,
    q: f64,
    now: Timestamp,
    edit_window_ms: i64,
) -> Result<CoverageReport> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("critical fraction must be in (0, 1], got {q}")));
    }
    let sources: Vec<NodeId> = graph
        .nodes()
        .filter(|n| n.kind == NodeKind::Source)
        .map(|n| n.id)
        .collect();
    if sources.is_empty() {
        return Ok(CoverageReport::default());
    }
    let covered = covered_sources(graph);
    let scores = criticality_table(graph, now, edit_window_ms);

    let mut ranked = sources.clone();
    ranked.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then(a.cmp(b)));
    let size = (q * sources.len() as f64).ceil() as usize;
    let mut critical_set: Vec<NodeId> = ranked.into_iter().take(size.max(1)).collect();
    critical_set.sort();

    let n_covered = sources.iter().filter(|id| covered.contains(id)).count();
    let n_critical_covered = critical_set.iter().filter(|id| covered.contains(id)).count();
    Ok(CoverageReport {
        overall: n_covered as f64 / sources.len() as f64,
        critical: n_critical_covered as f64 / critical_set.len() as f64,
        per_node_covered: sources.iter().map(|id| (*id, covered.contains(id))).collect(),
        critical_set,
    })
}

/// A ratio plus the reason it is degenerate, if it is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub warning: Option<String>,
}

/// Share of ground-truth faults with at least one bug-fix suggestion
/// carrying a matching fault id. An empty manifest is vacuously 1.0.
pub fn detection_accuracy<'a>(
    fault_ids: impl IntoIterator<Item = &'a str>,
    detected: impl IntoIterator<Item = &'a SuggestionDraft>,
) -> Metric {
    let truth: BTreeSet<&str> = fault_ids.into_iter().collect();
    if truth.is_empty() {
        tracing::warn!("detection accuracy over an empty fault manifest");
        return Metric {
            value: 1.0,
            warning: Some("empty fault manifest".into()),
        };
    }
    let found: BTreeSet<&str> = detected
        .into_iter()
        .filter(|d| d.kind == SuggestionKind::BugFix)
        .filter_map(|d| d.fault_id.as_deref())
        .filter(|id| truth.contains(id))
        .collect();
    Metric {
        value: found.len() as f64 / truth.len() as f64,
        warning: None,
    }
}

/// Accepted suggestions over all suggestions triggered.
pub fn acceptance_rate(accepted: usize, total: usize) -> Metric {
    if total == 0 {
        tracing::warn!("acceptance rate over an empty suggestion log");
        return Metric {
            value: 0.0,
            warning: Some("no suggestions in the log window".into()),
        };
    }
    Metric {
        value: accepted as f64 / total as f64,
        warning: None,
    }
}
