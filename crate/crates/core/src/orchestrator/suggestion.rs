//! Suggestions and their lifecycle.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codegraph::NodeId;
use crate::error::{Error, Result};
use crate::gateway::{SuggestionDraft, SuggestionKind};
use crate::prompt::TaskKind;
use crate::time::Timestamp;

const CROCKFORD: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";

/// 128-bit ULID-style id: 48 bits of creation milliseconds followed by an
/// 80-bit counter, rendered as 26 Crockford base32 characters. Ids sort by
/// creation time, then by counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SuggestionId(u128);

impl SuggestionId {
    pub fn new(at: Timestamp, counter: u64) -> Self {
        let ms = (at.millis().max(0) as u128) & ((1 << 48) - 1);
        SuggestionId((ms << 80) | counter as u128)
    }

    pub fn created_millis(self) -> i64 {
        (self.0 >> 80) as i64
    }
}

impl fmt::Display for SuggestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = [0u8; 26];
        for (i, slot) in buf.iter_mut().enumerate() {
            let shift = 5 * (25 - i);
            *slot = CROCKFORD[((self.0 >> shift) & 31) as usize];
        }
        f.write_str(std::str::from_utf8(&buf).expect("ascii"))
    }
}

impl FromStr for SuggestionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::NotFound(format!("suggestion {s}"));
        if s.len() != 26 {
            return Err(bad());
        }
        let mut value: u128 = 0;
        for (i, c) in s.bytes().enumerate() {
            let digit = CROCKFORD
                .iter()
                .position(|d| *d == c.to_ascii_uppercase())
                .ok_or_else(bad)? as u128;
            if i == 0 && digit > 7 {
                return Err(bad());
            }
            value = (value << 5) | digit;
        }
        Ok(SuggestionId(value))
    }
}

impl Serialize for SuggestionId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SuggestionId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionStatus {
    Pending,
    Accepted,
    Rejected,
    Superseded,
}

impl SuggestionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SuggestionStatus::Pending => "pending",
            SuggestionStatus::Accepted => "accepted",
            SuggestionStatus::Rejected => "rejected",
            SuggestionStatus::Superseded => "superseded",
        }
    }
}

impl FromStr for SuggestionStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(SuggestionStatus::Pending),
            "accepted" => Ok(SuggestionStatus::Accepted),
            "rejected" => Ok(SuggestionStatus::Rejected),
            "superseded" => Ok(SuggestionStatus::Superseded),
            other => Err(Error::Config(format!("unknown suggestion status {other:?}"))),
        }
    }
}

/// A snippet that was in the prompt which produced a suggestion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRef {
    pub node_id: NodeId,
    pub path: String,
    pub line_range: (u32, u32),
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: SuggestionId,
    pub draft: SuggestionDraft,
    pub created_at: Timestamp,
    pub status: SuggestionStatus,
    pub source_event_seq: u64,
    pub task: TaskKind,
    #[serde(default)]
    pub resolved_at: Option<Timestamp>,
    #[serde(default)]
    pub context: Vec<ContextRef>,
}

impl Suggestion {
    pub fn overlaps(&self, path: &str, start: u32, end: u32) -> bool {
        self.draft.path == path && self.draft.line_start <= end && start <= self.draft.line_end
    }
}

/// In-memory view of `suggestions.jsonl`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuggestionBook {
    items: BTreeMap<SuggestionId, Suggestion>,
}

impl SuggestionBook {
    pub fn get(&self, id: SuggestionId) -> Option<&Suggestion> {
        self.items.get(&id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Suggestion> {
        self.items.values()
    }

    pub fn with_status(&self, status: SuggestionStatus) -> impl Iterator<Item = &Suggestion> {
        self.items.values().filter(move |s| s.status == status)
    }

    pub fn count(&self, status: SuggestionStatus) -> usize {
        self.with_status(status).count()
    }

    /// Pending suggestions the new one would supersede.
    pub fn overlapping_pending(&self, draft: &SuggestionDraft) -> Vec<SuggestionId> {
        self.with_status(SuggestionStatus::Pending)
            .filter(|s| s.overlaps(&draft.path, draft.line_start, draft.line_end))
            .map(|s| s.id)
            .collect()
    }

    /// True when a superseded pending suggestion already reported this fault.
    pub fn repeats_fault(&self, draft: &SuggestionDraft, superseded: &[SuggestionId]) -> bool {
        draft.kind == SuggestionKind::BugFix
            && draft.fault_id.is_some()
            && superseded.iter().any(|id| {
                let old = &self.items[id].draft;
                old.kind == SuggestionKind::BugFix && old.fault_id == draft.fault_id
            })
    }

    pub fn insert(&mut self, suggestion: Suggestion) {
        self.items.insert(suggestion.id, suggestion);
    }

    /// Moves a pending suggestion to a terminal status.
    pub fn transition(
        &mut self,
        id: SuggestionId,
        status: SuggestionStatus,
        at: Timestamp,
    ) -> Result<&Suggestion> {
        let s = self
            .items
            .get_mut(&id)
            .ok_or_else(|| Error::NotFound(format!("suggestion {id}")))?;
        if s.status != SuggestionStatus::Pending || status == SuggestionStatus::Pending {
            return Err(Error::InvalidTransition {
                id: id.to_string(),
                status: s.status.as_str().to_string(),
            });
        }
        s.status = status;
        s.resolved_at = Some(at);
        Ok(s)
    }
}
