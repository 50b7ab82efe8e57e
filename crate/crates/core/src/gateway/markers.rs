//! Fault-marker grammar shared by the mock model and the corpus generator:
//! `/* FAULT:<id>:LOCAL */`, `/* FAULT:<id>:XFILE:<peer-path> */`, or the
//! same after `//`.

use std::sync::LazyLock;

use regex::Regex;

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:/\*|//)\s*FAULT:([A-Za-z0-9_.\-]+):(?:(LOCAL)|XFILE:([^\s*]+))").unwrap()
});

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MarkerKind {
    Local,
    CrossFile { peer: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultMarker {
    pub fault_id: String,
    pub kind: MarkerKind,
    /// Zero-based line index within the scanned text.
    pub line_index: usize,
    pub line_text: String,
}

pub fn scan_markers(text: &str) -> Vec<FaultMarker> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        for c in MARKER.captures_iter(line) {
            let kind = match c.get(3) {
                Some(peer) => MarkerKind::CrossFile {
                    peer: peer.as_str().to_string(),
                },
                None => MarkerKind::Local,
            };
            out.push(FaultMarker {
                fault_id: c[1].to_string(),
                kind,
                line_index: i,
                line_text: line.to_string(),
            });
        }
    }
    out
}

pub fn has_marker(text: &str) -> bool {
    MARKER.is_match(text)
}

pub fn local_marker(fault_id: &str) -> String {
    format!("/* FAULT:{fault_id}:LOCAL */")
}

pub fn cross_file_marker(fault_id: &str, peer: &str) -> String {
    format!("// FAULT:{fault_id}:XFILE:{peer}")
}
