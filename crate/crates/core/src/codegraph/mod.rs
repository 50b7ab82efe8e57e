//! File-level dependency graph of the codebase.
//!
//! Nodes are indexed files carrying their text, activity statistics and
//! context embedding; a directed edge `u -> v` means "u depends on v". The
//! graph only changes through [`CodeGraph::apply_change`], one sequenced
//! [`ChangeEvent`] at a time, so replaying the event log from an empty graph
//! reproduces it exactly.

mod event;
pub mod extract;
mod index;
mod rules;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use crate::embedding::ContextEmbedding;
use crate::error::{Error, Result};
use crate::time::Timestamp;

pub use event::{Change, ChangeEvent};
pub use index::{build_graph, creation_events, relative_path, scan_files, IndexWarning, ScannedFile};
pub use rules::GraphRules;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Source,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub open_bug_count: u32,
    pub last_bug_at: Option<Timestamp>,
    pub resolved_bug_count: u32,
    pub last_cursor_at: Option<Timestamp>,
    /// Edit times still inside the trailing window as of the newest edit.
    pub edit_times: Vec<Timestamp>,
}

impl NodeStats {
    /// Edits within `window_ms` before `now`, evaluated lazily.
    pub fn edit_count_window(&self, now: Timestamp, window_ms: i64) -> u32 {
        let cutoff = now.millis() - window_ms;
        self.edit_times
            .iter()
            .filter(|t| t.millis() > cutoff && **t <= now)
            .count() as u32
    }

    pub fn last_edit_at(&self) -> Option<Timestamp> {
        self.edit_times.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeNode {
    pub id: NodeId,
    pub path: String,
    pub kind: NodeKind,
    #[serde(with = "hex_hash")]
    pub content_hash: u64,
    pub line_count: u32,
    pub stats: NodeStats,
    pub last_edit_line: Option<u32>,
    pub cursor_line: Option<u32>,
    pub last_test_failed: Option<bool>,
    /// Extracted references and the node each resolved to.
    pub deps: BTreeMap<String, Option<NodeId>>,
    pub embedding: ContextEmbedding,
    pub text: String,
}

impl CodeNode {
    fn new(id: NodeId, path: String, kind: NodeKind, text: String) -> Self {
        CodeNode {
            id,
            path,
            kind,
            content_hash: content_hash(text.as_bytes()),
            line_count: text.lines().count() as u32,
            stats: NodeStats::default(),
            last_edit_line: None,
            cursor_line: None,
            last_test_failed: None,
            deps: BTreeMap::new(),
            embedding: ContextEmbedding::zero(),
            text,
        }
    }

    /// Line of the most recent edit or cursor visit, whichever is newer.
    pub fn focus_line(&self) -> Option<u32> {
        match (self.stats.last_edit_at(), self.stats.last_cursor_at) {
            (Some(e), Some(c)) if c > e => self.cursor_line,
            (Some(_), _) => self.last_edit_line.or(self.cursor_line),
            (None, _) => self.cursor_line,
        }
    }
}

/// 64-bit FNV-1a of the file bytes.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

mod hex_hash {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CodeGraph {
    version: u64,
    last_seq: u64,
    next_id: u32,
    nodes: BTreeMap<NodeId, CodeNode>,
    out_edges: BTreeMap<NodeId, BTreeSet<NodeId>>,
    in_edges: BTreeMap<NodeId, BTreeSet<NodeId>>,
    by_path: BTreeMap<String, NodeId>,
    /// name -> nodes answering to it, in path order
    by_name: BTreeMap<String, BTreeSet<(String, NodeId)>>,
    /// name -> nodes holding an unresolved reference to it
    unresolved: BTreeMap<String, BTreeSet<NodeId>>,
}

impl CodeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.values().map(BTreeSet::len).sum()
    }

    pub fn node(&self, id: NodeId) -> Option<&CodeNode> {
        self.nodes.get(&id)
    }

    pub fn node_by_path(&self, path: &str) -> Option<&CodeNode> {
        self.by_path.get(path).and_then(|id| self.nodes.get(id))
    }

    pub fn id_of(&self, path: &str) -> Option<NodeId> {
        self.by_path.get(path).copied()
    }

    pub fn contains_path(&self, path: &str) -> bool {
        self.by_path.contains_key(path)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &CodeNode> {
        self.nodes.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Directed edges `(from, to)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_edges
            .iter()
            .flat_map(|(from, tos)| tos.iter().map(move |to| (*from, *to)))
    }

    pub fn successors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.out_edges.get(&id).into_iter().flatten().copied()
    }

    pub fn predecessors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.in_edges.get(&id).into_iter().flatten().copied()
    }

    /// Neighbors in the undirected view, ascending.
    pub fn neighbors(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.successors(id).chain(self.predecessors(id)).collect()
    }

    /// In-degree plus out-degree.
    pub fn degree(&self, id: NodeId) -> usize {
        self.out_edges.get(&id).map_or(0, BTreeSet::len)
            + self.in_edges.get(&id).map_or(0, BTreeSet::len)
    }

    /// Degree centrality `(in + out) / (2 (N - 1))`, 0 when N <= 1.
    pub fn centrality(&self, id: NodeId) -> Result<f64> {
        if !self.contains(id) {
            return Err(Error::NotFound(format!("node {id}")));
        }
        let n = self.nodes.len();
        if n <= 1 {
            return Ok(0.0);
        }
        Ok(self.degree(id) as f64 / (2.0 * (n - 1) as f64))
    }

    /// Undirected shortest hop count; `None` when unreachable.
    pub fn graph_distance(&self, a: NodeId, b: NodeId) -> Result<Option<u32>> {
        for id in [a, b] {
            if !self.contains(id) {
                return Err(Error::NotFound(format!("node {id}")));
            }
        }
        Ok(self.distances_from([a], None).get(&b).copied())
    }

    /// Multi-source BFS over the undirected view. Sources sit at distance 0;
    /// nodes farther than `max_hops` are not visited.
    pub fn distances_from(
        &self,
        sources: impl IntoIterator<Item = NodeId>,
        max_hops: Option<u32>,
    ) -> BTreeMap<NodeId, u32> {
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        for s in sources {
            if self.contains(s) && dist.insert(s, 0).is_none() {
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if max_hops.is_some_and(|m| d >= m) {
                continue;
            }
            for v in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(v) {
                    e.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub(crate) fn set_embedding(&mut self, id: NodeId, embedding: ContextEmbedding) {
        if let Some(node) = self.nodes.get_mut(&id) {
            node.embedding = embedding;
        }
    }

    /// Applies one sequenced event and returns the ids of every node whose
    /// fields or incident edge set changed (deleted ids included). On error
    /// the graph is left untouched.
    pub fn apply_change(
        &mut self,
        event: &ChangeEvent,
        rules: &GraphRules,
    ) -> Result<BTreeSet<NodeId>> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(Error::Sequence {
                expected,
                got: event.seq,
            });
        }
        let stale = || Error::StaleEvent {
            seq: event.seq,
            kind: event.change.name(),
            path: event.path.clone(),
        };
        let target = self.by_path.get(&event.path).copied();
        let changed = match &event.change {
            Change::FileCreated { content } => {
                if target.is_some() || event.path.is_empty() {
                    return Err(stale());
                }
                self.create_node(&event.path, content, rules)
            }
            Change::FileEdited {
                content,
                line_start,
                ..
            } => {
                let id = target.ok_or_else(stale)?;
                let mut changed = self.replace_content(id, content);
                let node = self.nodes.get_mut(&id).expect("target exists");
                record_edit(&mut node.stats, event.at, rules.edit_window_ms);
                node.last_edit_line = Some(*line_start);
                changed.insert(id);
                changed
            }
            Change::SuggestionApplied {
                bug_fix,
                content,
                line_start,
                ..
            } => {
                let id = target.ok_or_else(stale)?;
                let mut changed = self.replace_content(id, content);
                let node = self.nodes.get_mut(&id).expect("target exists");
                record_edit(&mut node.stats, event.at, rules.edit_window_ms);
                node.last_edit_line = Some(*line_start);
                if *bug_fix {
                    node.stats.open_bug_count = node.stats.open_bug_count.saturating_sub(1);
                    node.stats.resolved_bug_count += 1;
                }
                changed.insert(id);
                changed
            }
            Change::FileDeleted => {
                let id = target.ok_or_else(stale)?;
                self.delete_node(id)
            }
            Change::CursorMoved { line } => {
                let id = target.ok_or_else(stale)?;
                let node = self.nodes.get_mut(&id).expect("target exists");
                node.stats.last_cursor_at = Some(event.at);
                node.cursor_line = Some(*line);
                BTreeSet::from([id])
            }
            Change::BugDetected { .. } => {
                let id = target.ok_or_else(stale)?;
                let node = self.nodes.get_mut(&id).expect("target exists");
                node.stats.open_bug_count += 1;
                node.stats.last_bug_at = Some(event.at);
                BTreeSet::from([id])
            }
            Change::TestResult {
                passed,
                covered_paths,
            } => {
                if !event.path.is_empty() && target.is_none() {
                    return Err(stale());
                }
                let touched: BTreeSet<NodeId> = target
                    .into_iter()
                    .chain(covered_paths.iter().filter_map(|p| self.id_of(p)))
                    .collect();
                let mut changed = BTreeSet::new();
                for id in touched {
                    let node = self.nodes.get_mut(&id).expect("resolved id exists");
                    if *passed {
                        if node.last_test_failed != Some(false) {
                            node.last_test_failed = Some(false);
                            changed.insert(id);
                        }
                    } else {
                        node.stats.open_bug_count += 1;
                        node.stats.last_bug_at = Some(event.at);
                        node.last_test_failed = Some(true);
                        changed.insert(id);
                    }
                }
                changed
            }
        };
        self.version += 1;
        self.last_seq = event.seq;
        Ok(changed)
    }

    fn create_node(&mut self, path: &str, text: &str, rules: &GraphRules) -> BTreeSet<NodeId> {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let node = CodeNode::new(id, path.to_string(), rules.kind_of(path), text.to_string());
        self.nodes.insert(id, node);
        self.by_path.insert(path.to_string(), id);
        let names = extract::node_names(path, text);
        for name in &names {
            self.by_name
                .entry(name.clone())
                .or_default()
                .insert((path.to_string(), id));
        }

        let mut changed = BTreeSet::from([id]);
        changed.extend(self.resolve_outgoing(id));

        // References elsewhere that were waiting for one of our names.
        for name in &names {
            let Some(waiters) = self.unresolved.get(name) else {
                continue;
            };
            let waiters: Vec<NodeId> = waiters.iter().copied().filter(|u| *u != id).collect();
            for u in waiters {
                self.unresolved_remove(name, u);
                if let Some(node) = self.nodes.get_mut(&u) {
                    node.deps.insert(name.clone(), Some(id));
                }
                changed.extend(self.sync_edges(u));
            }
        }
        changed
    }

    /// Replaces a node's bytes and re-extracts only its outgoing edges.
    fn replace_content(&mut self, id: NodeId, text: &str) -> BTreeSet<NodeId> {
        let node = &self.nodes[&id];
        let path = node.path.clone();
        for name in extract::node_names(&path, &node.text) {
            self.by_name_remove(&name, &path, id);
        }
        for name in extract::node_names(&path, text) {
            self.by_name.entry(name).or_default().insert((path.clone(), id));
        }
        let node = self.nodes.get_mut(&id).expect("node exists");
        node.text = text.to_string();
        node.content_hash = content_hash(text.as_bytes());
        node.line_count = text.lines().count() as u32;
        self.resolve_outgoing(id)
    }

    fn delete_node(&mut self, id: NodeId) -> BTreeSet<NodeId> {
        let node = self.nodes[&id].clone();
        for name in extract::node_names(&node.path, &node.text) {
            self.by_name_remove(&name, &node.path, id);
        }
        for (name, target) in &node.deps {
            if target.is_none() {
                self.unresolved_remove(name, id);
            }
        }
        self.by_path.remove(&node.path);

        let mut changed = BTreeSet::from([id]);
        for t in self.out_edges.remove(&id).unwrap_or_default() {
            if let Some(ins) = self.in_edges.get_mut(&t) {
                ins.remove(&id);
            }
            changed.insert(t);
        }
        self.nodes.remove(&id);

        // Dependents re-resolve the references that pointed here.
        let dependents = self.in_edges.remove(&id).unwrap_or_default();
        for u in dependents {
            let refs: Vec<String> = self.nodes[&u]
                .deps
                .iter()
                .filter(|(_, t)| **t == Some(id))
                .map(|(name, _)| name.clone())
                .collect();
            for name in refs {
                let target = self.resolve(&name, u);
                self.nodes.get_mut(&u).expect("dependent exists").deps.insert(name.clone(), target);
                if target.is_none() {
                    self.unresolved.entry(name).or_default().insert(u);
                }
            }
            if let Some(outs) = self.out_edges.get_mut(&u) {
                outs.remove(&id);
            }
            changed.insert(u);
            changed.extend(self.sync_edges(u));
        }
        changed
    }

    /// First node in path order answering to `name`, other than `from`.
    fn resolve(&self, name: &str, from: NodeId) -> Option<NodeId> {
        self.by_name
            .get(name)?
            .iter()
            .find(|(_, id)| *id != from)
            .map(|(_, id)| *id)
    }

    fn resolve_outgoing(&mut self, id: NodeId) -> BTreeSet<NodeId> {
        let old: Vec<(String, Option<NodeId>)> = self.nodes[&id]
            .deps
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        for (name, target) in old {
            if target.is_none() {
                self.unresolved_remove(&name, id);
            }
        }
        let refs = extract::extract(&self.nodes[&id].text).refs;
        let deps: BTreeMap<String, Option<NodeId>> = refs
            .into_iter()
            .map(|name| {
                let target = self.resolve(&name, id);
                (name, target)
            })
            .collect();
        for (name, target) in &deps {
            if target.is_none() {
                self.unresolved.entry(name.clone()).or_default().insert(id);
            }
        }
        self.nodes.get_mut(&id).expect("node exists").deps = deps;
        self.sync_edges(id)
    }

    /// Re-derives `id`'s outgoing edges from its deps; returns the nodes
    /// whose incident edge set changed.
    fn sync_edges(&mut self, id: NodeId) -> BTreeSet<NodeId> {
        let wanted: BTreeSet<NodeId> = self.nodes[&id]
            .deps
            .values()
            .flatten()
            .copied()
            .filter(|t| *t != id)
            .collect();
        let current = self.out_edges.get(&id).cloned().unwrap_or_default();
        let mut changed = BTreeSet::new();
        for t in current.difference(&wanted) {
            if let Some(ins) = self.in_edges.get_mut(t) {
                ins.remove(&id);
                if ins.is_empty() {
                    self.in_edges.remove(t);
                }
            }
            changed.insert(*t);
        }
        for t in wanted.difference(&current) {
            self.in_edges.entry(*t).or_default().insert(id);
            changed.insert(*t);
        }
        if !changed.is_empty() {
            changed.insert(id);
        }
        if wanted.is_empty() {
            self.out_edges.remove(&id);
        } else {
            self.out_edges.insert(id, wanted);
        }
        changed
    }

    fn by_name_remove(&mut self, name: &str, path: &str, id: NodeId) {
        if let Some(set) = self.by_name.get_mut(name) {
            set.remove(&(path.to_string(), id));
            if set.is_empty() {
                self.by_name.remove(name);
            }
        }
    }

    fn unresolved_remove(&mut self, name: &str, id: NodeId) {
        if let Some(set) = self.unresolved.get_mut(name) {
            set.remove(&id);
            if set.is_empty() {
                self.unresolved.remove(name);
            }
        }
    }

    /// Rebuilds a graph from persisted nodes, validating every invariant.
    pub fn from_parts(
        version: u64,
        last_seq: u64,
        next_id: u32,
        nodes: Vec<CodeNode>,
    ) -> std::result::Result<Self, String> {
        let mut g = CodeGraph {
            version,
            last_seq,
            next_id,
            ..CodeGraph::default()
        };
        for node in nodes {
            if node.id.0 >= next_id {
                return Err(format!("node {} has id >= next_id {next_id}", node.id));
            }
            if g.by_path.insert(node.path.clone(), node.id).is_some() {
                return Err(format!("duplicate path {}", node.path));
            }
            for name in extract::node_names(&node.path, &node.text) {
                g.by_name
                    .entry(name)
                    .or_default()
                    .insert((node.path.clone(), node.id));
            }
            if g.nodes.insert(node.id, node).is_some() {
                return Err("duplicate node id".into());
            }
        }
        let ids: Vec<NodeId> = g.nodes.keys().copied().collect();
        for id in ids {
            let deps = g.nodes[&id].deps.clone();
            for (name, target) in deps {
                match target {
                    None => {
                        g.unresolved.entry(name).or_default().insert(id);
                    }
                    Some(t) if t == id => return Err(format!("self-loop on {id}")),
                    Some(t) if !g.nodes.contains_key(&t) => {
                        return Err(format!("{id} depends on missing node {t}"));
                    }
                    Some(_) => {}
                }
            }
            g.sync_edges(id);
        }
        Ok(g)
    }
}

fn record_edit(stats: &mut NodeStats, at: Timestamp, window_ms: i64) {
    stats.edit_times.retain(|t| t.millis() > at.millis() - window_ms);
    stats.edit_times.push(at);
}
