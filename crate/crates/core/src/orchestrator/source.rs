//! Change sources: the real filesystem watcher and a scripted replay.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::Duration;

use notify::{RecommendedWatcher, RecursiveMode, Watcher};

use crate::codegraph::relative_path;
use crate::error::{Error, Result};
use crate::time::{Clock, Timestamp};

use super::debounce::PendingChange;

#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    /// A fully described change.
    Change(PendingChange),
    /// Something happened at `path`; the engine diffs it against the graph.
    Touched { at: Timestamp, path: String },
}

impl Observation {
    pub fn at(&self) -> Timestamp {
        match self {
            Observation::Change(c) => c.at,
            Observation::Touched { at, .. } => *at,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceEvent {
    Observed(Observation),
    /// Nothing arrived within the poll interval.
    Idle,
    /// The source is exhausted.
    Closed,
}

pub trait ChangeSource {
    fn next(&mut self, wait: Duration) -> SourceEvent;
}

/// Replays a fixed list of observations, then closes.
#[derive(Clone, Debug, Default)]
pub struct ScriptedSource {
    script: VecDeque<Observation>,
}

impl ScriptedSource {
    pub fn new(script: impl IntoIterator<Item = Observation>) -> Self {
        ScriptedSource {
            script: script.into_iter().collect(),
        }
    }
}

impl ChangeSource for ScriptedSource {
    fn next(&mut self, _wait: Duration) -> SourceEvent {
        match self.script.pop_front() {
            Some(o) => SourceEvent::Observed(o),
            None => SourceEvent::Closed,
        }
    }
}

/// Filesystem notifications for a working tree. Paths under `.ctt` and
/// other hidden directories are ignored.
pub struct FsSource {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    rx: Receiver<notify::Result<notify::Event>>,
    queue: VecDeque<Observation>,
    _watcher: RecommendedWatcher,
}

impl FsSource {
    pub fn new(root: &Path, clock: Arc<dyn Clock>) -> Result<Self> {
        let root = root.canonicalize().map_err(|source| Error::Index {
            path: root.to_path_buf(),
            source,
        })?;
        let (tx, rx) = channel();
        let mut watcher = notify::recommended_watcher(tx)
            .map_err(|e| Error::Config(format!("cannot start file watcher: {e}")))?;
        watcher
            .watch(&root, RecursiveMode::Recursive)
            .map_err(|e| Error::Config(format!("cannot watch {}: {e}", root.display())))?;
        Ok(FsSource {
            root,
            clock,
            rx,
            queue: VecDeque::new(),
            _watcher: watcher,
        })
    }

    fn enqueue(&mut self, event: notify::Event) {
        let at = self.clock.now();
        for path in event.paths {
            let Some(rel) = relative_path(&self.root, &path) else {
                continue;
            };
            if rel.split('/').any(|seg| seg.starts_with('.')) {
                continue;
            }
            self.queue.push_back(Observation::Touched { at, path: rel });
        }
    }
}

impl ChangeSource for FsSource {
    fn next(&mut self, wait: Duration) -> SourceEvent {
        loop {
            if let Some(o) = self.queue.pop_front() {
                return SourceEvent::Observed(o);
            }
            match self.rx.recv_timeout(wait) {
                Ok(Ok(event)) => {
                    if event.kind.is_access() {
                        continue;
                    }
                    self.enqueue(event)
                }
                Ok(Err(e)) => tracing::warn!("watch error: {e}"),
                Err(RecvTimeoutError::Timeout) => return SourceEvent::Idle,
                Err(RecvTimeoutError::Disconnected) => return SourceEvent::Closed,
            }
        }
    }
}
