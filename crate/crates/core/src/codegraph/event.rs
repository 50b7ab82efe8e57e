use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// One entry of the append-only event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub seq: u64,
    pub at: Timestamp,
    /// Repo-relative path; empty only for batch test results.
    pub path: String,
    #[serde(flatten)]
    pub change: Change,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Change {
    FileCreated {
        content: String,
    },
    FileEdited {
        content: String,
        line_start: u32,
        line_end: u32,
    },
    FileDeleted,
    CursorMoved {
        line: u32,
    },
    TestResult {
        passed: bool,
        #[serde(default)]
        covered_paths: Vec<String>,
    },
    SuggestionApplied {
        suggestion_id: String,
        bug_fix: bool,
        content: String,
        line_start: u32,
        line_end: u32,
    },
    /// A model-reported defect on the node; feeds the bug-log factor.
    BugDetected {
        suggestion_id: String,
        #[serde(default)]
        fault_id: Option<String>,
    },
}

impl Change {
    pub fn name(&self) -> &'static str {
        match self {
            Change::FileCreated { .. } => "file_created",
            Change::FileEdited { .. } => "file_edited",
            Change::FileDeleted => "file_deleted",
            Change::CursorMoved { .. } => "cursor_moved",
            Change::TestResult { .. } => "test_result",
            Change::SuggestionApplied { .. } => "suggestion_applied",
            Change::BugDetected { .. } => "bug_detected",
        }
    }

    /// New file bytes carried by the change, if any.
    pub fn content(&self) -> Option<&str> {
        match self {
            Change::FileCreated { content }
            | Change::FileEdited { content, .. }
            | Change::SuggestionApplied { content, .. } => Some(content),
            _ => None,
        }
    }
}
