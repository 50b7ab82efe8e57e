//! On-disk state under `.ctt/`: append-only JSON-lines logs and the graph
//! snapshot.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codegraph::{ChangeEvent, CodeGraph, CodeNode, NodeId};
use crate::error::{Error, Result};
use crate::orchestrator::{Suggestion, SuggestionId, SuggestionStatus};
use crate::prompt::Interaction;
use crate::time::Timestamp;

pub const STATE_DIR: &str = ".ctt";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SUGGESTIONS_FILE: &str = "suggestions.jsonl";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const GRAPH_FILE: &str = "graph.json";

/// One line of `suggestions.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SuggestionRecord {
    Created {
        suggestion: Suggestion,
    },
    Status {
        id: SuggestionId,
        status: SuggestionStatus,
        at: Timestamp,
    },
}

/// Paths of the state files for one working tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dir: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout {
            dir: root.join(STATE_DIR),
        }
    }

    pub fn events(&self) -> PathBuf {
        self.dir.join(EVENTS_FILE)
    }

    pub fn suggestions(&self) -> PathBuf {
        self.dir.join(SUGGESTIONS_FILE)
    }

    pub fn history(&self) -> PathBuf {
        self.dir.join(HISTORY_FILE)
    }

    pub fn graph(&self) -> PathBuf {
        self.dir.join(GRAPH_FILE)
    }

    pub fn exists(&self) -> bool {
        self.events().is_file()
    }
}

/// Append-only writer; every record is one `write` of a full line.
#[derive(Debug)]
pub struct JsonlWriter {
    file: File,
}

impl JsonlWriter {
    pub fn open(path: &Path, truncate: bool) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(!truncate)
            .write(true)
            .truncate(truncate)
            .open(path)?;
        Ok(JsonlWriter { file })
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        Ok(())
    }

    pub fn sync(&mut self) -> Result<()> {
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads every record of a JSON-lines file. A missing file reads as empty.
/// A final line without its newline that fails to parse is treated as a
/// torn write and dropped; any other bad line is a [`Error::Load`].
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(e) if i + 1 == lines.len() && !complete => {
                tracing::warn!("{}: dropping torn final line: {e}", path.display());
            }
            Err(e) => {
                return Err(Error::Load {
                    path: path.to_path_buf(),
                    record: format!("line {}", i + 1),
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    version: u64,
    last_seq: u64,
    next_id: u32,
    nodes: Vec<&'a CodeNode>,
    edges: Vec<(NodeId, NodeId)>,
}

/// Canonical snapshot JSON: fixed field order, nodes by id, edges sorted.
pub fn snapshot_json(graph: &CodeGraph) -> String {
    serde_json::to_string(&SnapshotOut {
        version: graph.version(),
        last_seq: graph.last_seq(),
        next_id: graph.next_id(),
        nodes: graph.nodes().collect(),
        edges: graph.edges().collect(),
    })
    .expect("graph serializes")
}

/// Writes the snapshot through a temporary file and a rename.
pub fn save_snapshot(graph: &CodeGraph, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, snapshot_json(graph))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<CodeGraph> {
    let text = fs::read_to_string(path)?;
    parse_snapshot(&text, path)
}

/// Parses snapshot text. Nothing is returned unless the whole document is
/// valid; errors name the first failing record.
pub fn parse_snapshot(text: &str, path: &Path) -> Result<CodeGraph> {
    let fail = |record: &str, reason: String| Error::Load {
        path: path.to_path_buf(),
        record: record.to_string(),
        reason,
    };
    let doc: Value = serde_json::from_str(text).map_err(|e| fail("document", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| fail("document", "not a JSON object".into()))?;
    let field = |name: &str| {
        obj.get(name)
            .ok_or_else(|| fail(name, "missing field".into()))
    };
    let int = |name: &str| -> Result<u64> {
        field(name)?
            .as_u64()
            .ok_or_else(|| fail(name, "expected a non-negative integer".into()))
    };
    let version = int("version")?;
    let last_seq = int("last_seq")?;
    let next_id = u32::try_from(int("next_id")?).map_err(|e| fail("next_id", e.to_string()))?;

    let raw_nodes = field("nodes")?
        .as_array()
        .ok_or_else(|| fail("nodes", "expected an array".into()))?;
    let mut nodes = Vec::with_capacity(raw_nodes.len());
    for (i, raw) in raw_nodes.iter().enumerate() {
        let node: CodeNode = serde_json::from_value(raw.clone())
            .map_err(|e| fail(&format!("nodes[{i}]"), e.to_string()))?;
        nodes.push(node);
    }
    let edges: BTreeSet<(NodeId, NodeId)> = serde_json::from_value(field("edges")?.clone())
        .map_err(|e| fail("edges", e.to_string()))?;

    let graph = CodeGraph::from_parts(version, last_seq, next_id, nodes)
        .map_err(|reason| fail("nodes", reason))?;
    let derived: BTreeSet<(NodeId, NodeId)> = graph.edges().collect();
    if let Some(bad) = edges.symmetric_difference(&derived).next() {
        return Err(fail(
            "edges",
            format!("edge {} -> {} disagrees with node dependencies", bad.0, bad.1),
        ));
    }
    Ok(graph)
}

pub fn read_events(layout: &Layout) -> Result<Vec<ChangeEvent>> {
    read_jsonl(&layout.events())
}

pub fn read_suggestions(layout: &Layout) -> Result<Vec<SuggestionRecord>> {
    read_jsonl(&layout.suggestions())
}

pub fn read_history(layout: &Layout) -> Result<Vec<Interaction>> {
    read_jsonl(&layout.history())
}

/// The three append-only logs of a running engine.
#[derive(Debug)]
pub struct Logs {
    pub events: JsonlWriter,
    pub suggestions: JsonlWriter,
    pub history: JsonlWriter,
}

impl Logs {
    pub fn open(layout: &Layout, truncate: bool) -> Result<Self> {
        Ok(Logs {
            events: JsonlWriter::open(&layout.events(), truncate)?,
            suggestions: JsonlWriter::open(&layout.suggestions(), truncate)?,
            history: JsonlWriter::open(&layout.history(), truncate)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let mut w = JsonlWriter::open(&path, true).unwrap();
        w.append(&serde_json::json!({"a": 1})).unwrap();
        w.append(&serde_json::json!({"a": 2})).unwrap();
        drop(w);
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"a\":");
        fs::write(&path, &text).unwrap();
        let back: Vec<Value> = read_jsonl(&path).unwrap();
        assert_eq!(back.len(), 2);

        fs::write(&path, "{\"a\":1}\nnot json\n{\"a\":3}\n").unwrap();
        match read_jsonl::<Value>(&path) {
            Err(Error::Load { record, .. }) => assert_eq!(record, "line 2"),
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn missing_log_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let v: Vec<Value> = read_jsonl(&dir.path().join("none.jsonl")).unwrap();
        assert!(v.is_empty());
    }
}
