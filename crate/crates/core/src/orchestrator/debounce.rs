//! Debounce windows and per-path coalescing of pending changes.

use std::collections::BTreeMap;

use crate::codegraph::Change;
use crate::time::Timestamp;

/// A change observed but not yet applied to the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PendingChange {
    pub at: Timestamp,
    pub path: String,
    pub change: Change,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Content,
    Cursor,
    Test,
    Other,
}

fn class_of(change: &Change) -> Class {
    match change {
        Change::FileCreated { .. } | Change::FileEdited { .. } | Change::FileDeleted => Class::Content,
        Change::CursorMoved { .. } => Class::Cursor,
        Change::TestResult { .. } => Class::Test,
        _ => Class::Other,
    }
}

fn line_span(content: &str) -> (u32, u32) {
    (1, content.lines().count().max(1) as u32)
}

/// Merges two content changes on one path; `None` means they cancel out.
fn merge_content(prev: Change, next: Change) -> Option<Change> {
    match (prev, next) {
        (Change::FileCreated { .. }, Change::FileEdited { content, .. }) => {
            Some(Change::FileCreated { content })
        }
        (Change::FileCreated { .. }, Change::FileDeleted) => None,
        (Change::FileDeleted, Change::FileCreated { content }) => {
            let (line_start, line_end) = line_span(&content);
            Some(Change::FileEdited {
                content,
                line_start,
                line_end,
            })
        }
        (
            Change::FileEdited {
                line_start: s0,
                line_end: e0,
                ..
            },
            Change::FileEdited {
                content,
                line_start,
                line_end,
            },
        ) => Some(Change::FileEdited {
            content,
            line_start: s0.min(line_start),
            line_end: e0.max(line_end),
        }),
        (_, next) => Some(next),
    }
}

/// Collapses a window of changes to at most one per (path, class), keeping
/// the latest payload. Output is ordered by first arrival.
pub fn coalesce(changes: Vec<PendingChange>) -> Vec<PendingChange> {
    let mut slots: BTreeMap<(String, Class), usize> = BTreeMap::new();
    let mut merged: Vec<Option<PendingChange>> = Vec::new();
    for c in changes {
        let class = class_of(&c.change);
        if class == Class::Other {
            merged.push(Some(c));
            continue;
        }
        let key = (c.path.clone(), class);
        match slots.get(&key).copied() {
            Some(i) => {
                let slot = &mut merged[i];
                *slot = match slot.take() {
                    Some(prev) if class == Class::Content => {
                        merge_content(prev.change, c.change).map(|change| PendingChange {
                            at: c.at,
                            path: c.path,
                            change,
                        })
                    }
                    _ => Some(c),
                };
            }
            None => {
                slots.insert(key, merged.len());
                merged.push(Some(c));
            }
        }
    }
    merged.into_iter().flatten().collect()
}

/// Groups a stream of changes into windows closed by `debounce_ms` of quiet.
#[derive(Debug)]
pub struct Debouncer {
    debounce_ms: i64,
    buffer: Vec<PendingChange>,
    last_at: Option<Timestamp>,
}

impl Debouncer {
    pub fn new(debounce_ms: u64) -> Self {
        Debouncer {
            debounce_ms: debounce_ms as i64,
            buffer: Vec::new(),
            last_at: None,
        }
    }

    /// Whether a change arriving at `at` starts a new window.
    pub fn closes_at(&self, at: Timestamp) -> bool {
        self.last_at
            .is_some_and(|last| at.millis() - last.millis() > self.debounce_ms)
    }

    /// Adds a change, returning the previous window if this one closed it.
    pub fn push(&mut self, change: PendingChange) -> Option<Vec<PendingChange>> {
        let closed = if self.closes_at(change.at) {
            self.flush()
        } else {
            None
        };
        self.last_at = Some(change.at);
        self.buffer.push(change);
        closed
    }

    /// The current window if it has been quiet for the debounce interval.
    pub fn ready(&mut self, now: Timestamp) -> Option<Vec<PendingChange>> {
        match self.last_at {
            Some(last) if now.millis() - last.millis() >= self.debounce_ms => self.flush(),
            _ => None,
        }
    }

    pub fn flush(&mut self) -> Option<Vec<PendingChange>> {
        self.last_at = None;
        if self.buffer.is_empty() {
            None
        } else {
            Some(coalesce(std::mem::take(&mut self.buffer)))
        }
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}
