use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::time::Timestamp;

use super::{Change, ChangeEvent, CodeGraph, GraphRules};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScannedFile {
    /// Repo-relative, `/`-separated.
    pub path: String,
    pub content: String,
}

/// A file that was skipped during indexing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexWarning {
    pub path: PathBuf,
    pub reason: String,
}

impl std::fmt::Display for IndexWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "skipped {}: {}", self.path.display(), self.reason)
    }
}

/// Collects every included file under `root`, sorted by path. Hidden
/// directories (including the engine's own `.ctt`) are not descended.
pub fn scan_files(root: &Path, rules: &GraphRules) -> Result<(Vec<ScannedFile>, Vec<IndexWarning>)> {
    std::fs::read_dir(root).map_err(|source| Error::Index {
        path: root.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let walker = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                warnings.push(IndexWarning {
                    path: e.path().map(Path::to_path_buf).unwrap_or_default(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Some(rel) = relative_path(root, entry.path()) else {
            continue;
        };
        if !rules.is_included(&rel) {
            continue;
        }
        match std::fs::read(entry.path()) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(content) => files.push(ScannedFile { path: rel, content }),
                Err(_) => warnings.push(IndexWarning {
                    path: entry.path().to_path_buf(),
                    reason: "not valid UTF-8".into(),
                }),
            },
            Err(e) => warnings.push(IndexWarning {
                path: entry.path().to_path_buf(),
                reason: e.to_string(),
            }),
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    for w in &warnings {
        tracing::warn!(path = %w.path.display(), reason = %w.reason, "skipped file while indexing");
    }
    Ok((files, warnings))
}

pub fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    let parts: Vec<String> = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    if parts.is_empty() {
        None
    } else {
        Some(parts.join("/"))
    }
}

/// One `FileCreated` event per file, sequenced from `first_seq`.
pub fn creation_events(files: &[ScannedFile], first_seq: u64, at: Timestamp) -> Vec<ChangeEvent> {
    files
        .iter()
        .enumerate()
        .map(|(i, f)| ChangeEvent {
            seq: first_seq + i as u64,
            at,
            path: f.path.clone(),
            change: Change::FileCreated {
                content: f.content.clone(),
            },
        })
        .collect()
}

/// Indexes `root` into a fresh graph: one node per included file (ids in
/// path order) and one edge per resolved dependency reference. Embeddings
/// are left zero; the engine computes them while applying the same events.
pub fn build_graph(
    root: &Path,
    config: &EngineConfig,
    at: Timestamp,
) -> Result<(CodeGraph, Vec<IndexWarning>)> {
    let rules = config.graph_rules()?;
    let (files, warnings) = scan_files(root, &rules)?;
    let mut graph = CodeGraph::new();
    for event in creation_events(&files, 1, at) {
        graph.apply_change(&event, &rules)?;
    }
    Ok((graph, warnings))
}
