//! Multi-factor context embeddings and their diminishing-weight propagation.
//!
//! Layout of the 256-dimensional vector:
//!
//! | dims      | factor                                                   |
//! |-----------|----------------------------------------------------------|
//! | 0..192    | content: signed hashing of token trigrams                |
//! | 192..224  | path: signed hashing of path segments                    |
//! | 224       | cursor recency, `exp(-dt / 300 s)`                       |
//! | 225       | bug log, `min(1, log2(1 + open) / 4) * exp(-dt / 7 d)`   |
//! | 226       | degree, `min(1, degree / 16)`                            |
//! | 227       | degree centrality                                        |
//! | 228       | churn, `min(1, log2(1 + edits in window) / 8)`           |
//! | 229..256  | reserved, zero                                           |
//!
//! Each hashed block is L2-normalized and scaled by its factor weight; the
//! whole vector is then L2-normalized. A node with no signal at all keeps the
//! zero vector.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codegraph::{ChangeEvent, CodeGraph, GraphRules, NodeId, NodeStats};
use crate::error::{Error, Result};
use crate::time::Timestamp;

pub const DIM: usize = 256;
const CONTENT_BINS: usize = 192;
const PATH_START: usize = 192;
const PATH_BINS: usize = 32;
const CURSOR_DIM: usize = 224;
const BUG_DIM: usize = 225;
const DEGREE_DIM: usize = 226;
const CENTRALITY_DIM: usize = 227;
const CHURN_DIM: usize = 228;

const CURSOR_TAU_SECS: f64 = 300.0;
const BUG_TAU_SECS: f64 = 604_800.0;

/// Fixed-dimension embedding; unit length unless it is the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEmbedding(Vec<f64>);

impl ContextEmbedding {
    pub fn zero() -> Self {
        ContextEmbedding(vec![0.0; DIM])
    }

    pub fn from_vec(values: Vec<f64>) -> Option<Self> {
        (values.len() == DIM).then_some(ContextEmbedding(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, dim: usize) -> f64 {
        self.0[dim]
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    /// Cosine similarity; 0 when either side is the zero vector.
    pub fn cosine(&self, other: &ContextEmbedding) -> f64 {
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot / (na * nb)
    }

    fn normalized(mut values: Vec<f64>) -> Self {
        let n = l2(&values);
        if n > 0.0 {
            values.iter_mut().for_each(|v| *v /= n);
        }
        ContextEmbedding(values)
    }
}

impl Default for ContextEmbedding {
    fn default() -> Self {
        Self::zero()
    }
}

/// Nine significant digits, enough for the 1e-6 norm tolerance on reload.
fn round_sig9(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.8e}").parse().unwrap_or(v)
}

impl Serialize for ContextEmbedding {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|v| round_sig9(*v)))
    }
}

impl<'de> Deserialize<'de> for ContextEmbedding {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(d)?;
        let len = values.len();
        ContextEmbedding::from_vec(values).ok_or_else(|| {
            serde::de::Error::custom(format!("embedding has {len} dimensions, expected {DIM}"))
        })
    }
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FactorWeights {
    pub content: f64,
    pub path: f64,
    pub cursor: f64,
    pub bug: f64,
    pub conn: f64,
}

impl Default for FactorWeights {
    fn default() -> Self {
        FactorWeights {
            content: 1.0,
            path: 0.5,
            cursor: 2.0,
            bug: 2.0,
            conn: 1.0,
        }
    }
}

impl FactorWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.content, self.path, self.cursor, self.bug, self.conn];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("factor weights must be finite and non-negative".into()));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one factor weight must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    /// Per-hop decay; a node `d` hops away blends with weight `alpha^d`.
    pub alpha: f64,
    pub max_hops: u32,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            alpha: 0.5,
            max_hops: 2,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Everything the embedding step needs besides the graph and the clock.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedSettings {
    pub weights: FactorWeights,
    pub propagation: PropagationParams,
    pub edit_window_ms: i64,
}

impl EmbedSettings {
    pub fn from_config(config: &crate::EngineConfig) -> Self {
        EmbedSettings {
            weights: config.weights,
            propagation: config.propagation,
            edit_window_ms: config.edit_window_ms(),
        }
    }
}

impl Default for EmbedSettings {
    fn default() -> Self {
        Self::from_config(&crate::EngineConfig::default())
    }
}

fn feature_hash(salt: u8, feature: &[&str]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write_u8(salt);
    for (i, part) in feature.iter().enumerate() {
        if i > 0 {
            h.write_u8(0x1f);
        }
        h.write(part.as_bytes());
    }
    h.finish()
}

fn add_hashed(block: &mut [f64], hash: u64) {
    let bin = (hash % block.len() as u64) as usize;
    let sign = if hash >> 63 == 1 { -1.0 } else { 1.0 };
    block[bin] += sign;
}

/// Maximal runs of `[A-Za-z0-9_]`.
fn tokens(text: &str) -> Vec<&str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .collect()
}

fn scale_block(block: &mut [f64], weight: f64) {
    let n = l2(block);
    if n > 0.0 {
        block.iter_mut().for_each(|v| *v = *v / n * weight);
    }
}

/// Computes a node's embedding from its bytes, statistics and position in
/// the graph. Deterministic in (node, graph, weights, now).
pub fn embed_node(
    graph: &CodeGraph,
    id: NodeId,
    weights: &FactorWeights,
    now: Timestamp,
    edit_window_ms: i64,
) -> Result<ContextEmbedding> {
    let node = graph
        .node(id)
        .ok_or_else(|| Error::NotFound(format!("node {id}")))?;
    let mut v = vec![0.0; DIM];

    let toks = tokens(&node.text);
    {
        let block = &mut v[..CONTENT_BINS];
        if toks.len() >= 3 {
            for tri in toks.windows(3) {
                add_hashed(block, feature_hash(b'c', tri));
            }
        } else if !toks.is_empty() {
            add_hashed(block, feature_hash(b'c', &toks));
        }
        scale_block(block, weights.content);
    }

    let stats = &node.stats;
    v[CURSOR_DIM] = stats.last_cursor_at.map_or(0.0, |t| {
        weights.cursor * (-now.secs_since(t) / CURSOR_TAU_SECS).exp()
    });
    v[BUG_DIM] = bug_factor(stats, now) * weights.bug;
    let degree = graph.degree(id) as f64;
    v[DEGREE_DIM] = weights.conn * (degree / 16.0).min(1.0);
    v[CENTRALITY_DIM] = weights.conn * graph.centrality(id)?;
    let edits = stats.edit_count_window(now, edit_window_ms) as f64;
    v[CHURN_DIM] = weights.conn * ((1.0 + edits).log2() / 8.0).min(1.0);

    // A node with no content and no activity carries no context; the path
    // alone does not make it a context source.
    if v.iter().any(|x| *x != 0.0) {
        let block = &mut v[PATH_START..PATH_START + PATH_BINS];
        for seg in node.path.split('/').filter(|s| !s.is_empty()) {
            add_hashed(block, feature_hash(b'p', &[seg]));
        }
        scale_block(block, weights.path);
    }

    Ok(ContextEmbedding::normalized(v))
}

/// Unweighted bug-log factor, `min(1, log2(1 + open) / 4) * exp(-dt / 7 d)`.
pub fn bug_factor(stats: &NodeStats, now: Timestamp) -> f64 {
    if stats.open_bug_count == 0 {
        return 0.0;
    }
    let volume = ((1.0 + stats.open_bug_count as f64).log2() / 4.0).min(1.0);
    let recency = stats
        .last_bug_at
        .map_or(1.0, |t| (-now.secs_since(t) / BUG_TAU_SECS).exp());
    volume * recency
}

/// Recomputes every changed node, then blends the nearest changed sources
/// into each node up to `max_hops` away with weight `alpha^d`. Returns the
/// ids whose embeddings were rewritten. Ids no longer in the graph are
/// ignored.
pub fn propagate(
    graph: &mut CodeGraph,
    changed: &BTreeSet<NodeId>,
    params: &PropagationParams,
    weights: &FactorWeights,
    now: Timestamp,
    edit_window_ms: i64,
) -> BTreeSet<NodeId> {
    let sources: Vec<NodeId> = changed.iter().copied().filter(|id| graph.contains(*id)).collect();
    if sources.is_empty() {
        return BTreeSet::new();
    }
    let recomputed: BTreeMap<NodeId, ContextEmbedding> = sources
        .iter()
        .map(|id| {
            let e = embed_node(graph, *id, weights, now, edit_window_ms)
                .expect("source exists in graph");
            (*id, e)
        })
        .collect();
    for (id, e) in &recomputed {
        graph.set_embedding(*id, e.clone());
    }

    // Layered BFS remembering, per node, every source at minimal distance.
    let mut nearest: BTreeMap<NodeId, BTreeSet<NodeId>> =
        sources.iter().map(|s| (*s, BTreeSet::from([*s]))).collect();
    let mut frontier: Vec<NodeId> = sources.clone();
    let mut rewritten: BTreeSet<NodeId> = sources.iter().copied().collect();
    for d in 1..=params.max_hops {
        let mut layer: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for u in &frontier {
            let from_u = nearest[u].clone();
            for v in graph.neighbors(*u) {
                if nearest.contains_key(&v) {
                    continue;
                }
                layer.entry(v).or_default().extend(from_u.iter().copied());
            }
        }
        if layer.is_empty() {
            break;
        }
        let w = params.alpha.powi(d as i32);
        for (v, srcs) in &layer {
            let mut mean = vec![0.0; DIM];
            for s in srcs {
                for (m, x) in mean.iter_mut().zip(recomputed[s].as_slice()) {
                    *m += x;
                }
            }
            let count = srcs.len() as f64;
            let old = graph.node(*v).expect("neighbor exists").embedding.as_slice();
            let blended: Vec<f64> = old
                .iter()
                .zip(&mean)
                .map(|(o, m)| (1.0 - w) * o + w * (m / count))
                .collect();
            graph.set_embedding(*v, ContextEmbedding::normalized(blended));
            rewritten.insert(*v);
        }
        frontier = layer.keys().copied().collect();
        nearest.extend(layer);
    }
    rewritten
}

/// The single-writer step: apply one event, then propagate from every
/// surviving node it changed. Returns the ids reported by `apply_change`.
pub fn apply_and_propagate(
    graph: &mut CodeGraph,
    event: &ChangeEvent,
    rules: &GraphRules,
    settings: &EmbedSettings,
) -> Result<BTreeSet<NodeId>> {
    let changed = graph.apply_change(event, rules)?;
    propagate(
        graph,
        &changed,
        &settings.propagation,
        &settings.weights,
        event.at,
        settings.edit_window_ms,
    );
    Ok(changed)
}

pub enum Feedback<'a> {
    /// The accepted suggestion, already turned into its log event.
    Accepted(&'a ChangeEvent),
    Rejected,
}

/// Feeds a review verdict back into the graph. Accepted suggestions apply
/// their event (bug counters move for fixes) and propagate from the target;
/// rejections leave the graph untouched. Returns the target's stats.
pub fn absorb_feedback(
    graph: &mut CodeGraph,
    rules: &GraphRules,
    target: &str,
    feedback: Feedback<'_>,
    settings: &EmbedSettings,
) -> Result<NodeStats> {
    match feedback {
        Feedback::Rejected => {}
        Feedback::Accepted(event) => {
            if graph.id_of(target).is_none() && !matches!(event.change, crate::codegraph::Change::FileCreated { .. }) {
                return Err(Error::NotFound(format!("node {target}")));
            }
            apply_and_propagate(graph, event, rules, settings)?;
        }
    }
    graph
        .node_by_path(target)
        .map(|n| n.stats.clone())
        .ok_or_else(|| Error::NotFound(format!("node {target}")))
}

#[cfg(test)]
mod tests;
