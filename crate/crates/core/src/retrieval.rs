//! Context retrieval: rank graph nodes for a query site and pack their text
//! into a token budget.
//!
//! `S(v) = 0.60 * max(0, cos(e_focus, e_v)) + 0.25 / (1 + d(focus, v)) + 0.15 * crit(v)`,
//! with the proximity term 0 for unreachable nodes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::codegraph::{CodeGraph, CodeNode, NodeId};
use crate::coverage::criticality_table;
use crate::error::{Error, Result};
use crate::estimate_tokens;
use crate::prompt::{truncate_tail, TaskKind};
use crate::time::Timestamp;

/// Lines kept on each side of the focus line when a file must be windowed.
pub const WINDOW_RADIUS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreCoeffs {
    pub similarity: f64,
    pub proximity: f64,
    pub criticality: f64,
}

impl Default for ScoreCoeffs {
    fn default() -> Self {
        ScoreCoeffs {
            similarity: 0.60,
            proximity: 0.25,
            criticality: 0.15,
        }
    }
}

/// `FocusOnly` bypasses ranking and sends just the focus file, the
/// no-context baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    #[default]
    Full,
    FocusOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub coeffs: ScoreCoeffs,
    pub k: usize,
    pub snippet_budget_tokens: usize,
    pub mode: ContextMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            coeffs: ScoreCoeffs::default(),
            k: 8,
            snippet_budget_tokens: 4800,
            mode: ContextMode::Full,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        let c = self.coeffs;
        if [c.similarity, c.proximity, c.criticality]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return Err(Error::Config("score coefficients must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryContext {
    pub focus: NodeId,
    pub changed: BTreeSet<NodeId>,
    pub task: TaskKind,
    pub now: Timestamp,
    pub edit_window_ms: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedSnippet {
    pub node_id: NodeId,
    pub path: String,
    pub score: f64,
    pub text: String,
    pub line_range: (u32, u32),
}

/// Precomputed query state so a whole ranking costs one BFS and one
/// criticality pass.
pub struct Scorer<'g> {
    graph: &'g CodeGraph,
    focus: &'g CodeNode,
    distances: BTreeMap<NodeId, u32>,
    criticality: BTreeMap<NodeId, f64>,
    coeffs: ScoreCoeffs,
}

impl<'g> Scorer<'g> {
    pub fn new(graph: &'g CodeGraph, query: &QueryContext, coeffs: ScoreCoeffs) -> Result<Self> {
        let focus = graph
            .node(query.focus)
            .ok_or_else(|| Error::NotFound(format!("focus node {}", query.focus)))?;
        Ok(Scorer {
            graph,
            focus,
            distances: graph.distances_from([query.focus], None),
            criticality: criticality_table(graph, query.now, query.edit_window_ms),
            coeffs,
        })
    }

    pub fn score(&self, v: NodeId) -> Result<f64> {
        let node = self
            .graph
            .node(v)
            .ok_or_else(|| Error::NotFound(format!("node {v}")))?;
        let similarity = self.focus.embedding.cosine(&node.embedding).max(0.0);
        let proximity = self
            .distances
            .get(&v)
            .map_or(0.0, |d| 1.0 / (1.0 + *d as f64));
        Ok(self.coeffs.similarity * similarity
            + self.coeffs.proximity * proximity
            + self.coeffs.criticality * self.criticality[&v])
    }

    /// All nodes: focus first, then by (score desc, id asc).
    pub fn ranking(&self) -> Vec<(NodeId, f64)> {
        let focus = self.focus.id;
        let mut rest: Vec<(NodeId, f64)> = self
            .graph
            .ids()
            .filter(|id| *id != focus)
            .map(|id| (id, self.score(id).expect("id from graph")))
            .collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut out = vec![(focus, self.score(focus).expect("focus exists"))];
        out.extend(rest);
        out
    }
}

pub fn score_node(
    graph: &CodeGraph,
    query: &QueryContext,
    v: NodeId,
    coeffs: ScoreCoeffs,
) -> Result<f64> {
    Scorer::new(graph, query, coeffs)?.score(v)
}

/// Top-`k` nodes (focus always first) packed greedily into
/// `snippet_budget_tokens`. Returns fewer than `k` snippets when the graph
/// is small or the budget runs out.
pub fn retrieve(
    graph: &CodeGraph,
    query: &QueryContext,
    k: usize,
    snippet_budget_tokens: usize,
    coeffs: ScoreCoeffs,
) -> Result<Vec<RankedSnippet>> {
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let ranking = Scorer::new(graph, query, coeffs)?.ranking();
    Ok(pack(graph, ranking.into_iter().take(k), snippet_budget_tokens))
}

/// The focus file alone, unscored. Used when retrieval is bypassed.
pub fn focus_snippet(
    graph: &CodeGraph,
    focus: NodeId,
    snippet_budget_tokens: usize,
) -> Result<Vec<RankedSnippet>> {
    if !graph.contains(focus) {
        return Err(Error::NotFound(format!("focus node {focus}")));
    }
    Ok(pack(graph, [(focus, 1.0)].into_iter(), snippet_budget_tokens))
}

fn pack(
    graph: &CodeGraph,
    ranked: impl Iterator<Item = (NodeId, f64)>,
    budget: usize,
) -> Vec<RankedSnippet> {
    let mut remaining = budget;
    let mut out = Vec::new();
    for (id, score) in ranked {
        if remaining == 0 {
            break;
        }
        let node = graph.node(id).expect("ranked id exists");
        let Some(snippet) = snippet_for(node, score, remaining) else {
            break;
        };
        remaining -= estimate_tokens(snippet.text.len());
        out.push(snippet);
    }
    out
}

/// Whole file when it fits, else a window around the latest edit or cursor
/// line, cut tail-first to the remaining budget.
fn snippet_for(node: &CodeNode, score: f64, remaining_tokens: usize) -> Option<RankedSnippet> {
    let make = |text: String, range: (u32, u32)| RankedSnippet {
        node_id: node.id,
        path: node.path.clone(),
        score,
        text,
        line_range: range,
    };
    if estimate_tokens(node.text.len()) <= remaining_tokens {
        return Some(make(node.text.clone(), (1, node.line_count.max(1))));
    }
    let lines: Vec<&str> = node.text.lines().collect();
    let n = lines.len() as u32;
    let center = node.focus_line().unwrap_or(1).clamp(1, n.max(1));
    let start = center.saturating_sub(WINDOW_RADIUS).max(1);
    let end = (center + WINDOW_RADIUS).min(n);
    let window = lines[(start - 1) as usize..end as usize].join("\n");
    let text = truncate_tail(&window, remaining_tokens * 4);
    if text.is_empty() {
        return None;
    }
    let last = start + text.matches('\n').count() as u32;
    Some(make(text.to_string(), (start, last)))
}
