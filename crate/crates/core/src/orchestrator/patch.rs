//! Minimal unified-diff support: building the single-line deletions the
//! mock emits and applying hunks with offset search.

use std::sync::LazyLock;

use regex::Regex;

static HUNK_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@").unwrap());

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatchError {
    Malformed(String),
    /// The hunk's old lines are no longer present in the file.
    NoMatch { hunk: usize },
}

impl std::fmt::Display for PatchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PatchError::Malformed(why) => write!(f, "malformed patch: {why}"),
            PatchError::NoMatch { hunk } => write!(f, "hunk {hunk} does not match the file"),
        }
    }
}

/// Diff removing line `line` (1-based) whose current text is `text`.
pub fn deletion_patch(path: &str, line: u32, text: &str) -> String {
    format!(
        "--- a/{path}\n+++ b/{path}\n@@ -{line},1 +{},0 @@\n-{text}\n",
        line.saturating_sub(1)
    )
}

struct Hunk {
    old_start: usize,
    old: Vec<String>,
    new: Vec<String>,
}

fn parse(patch: &str) -> Result<Vec<Hunk>, PatchError> {
    let mut hunks: Vec<Hunk> = Vec::new();
    for line in patch.lines() {
        if line.starts_with("--- ") || line.starts_with("+++ ") || line.starts_with('\\') {
            continue;
        }
        if let Some(c) = HUNK_HEADER.captures(line) {
            let old_start: usize = c[1]
                .parse()
                .map_err(|_| PatchError::Malformed(format!("bad hunk header {line:?}")))?;
            hunks.push(Hunk {
                old_start,
                old: Vec::new(),
                new: Vec::new(),
            });
            continue;
        }
        let Some(hunk) = hunks.last_mut() else {
            if line.is_empty() {
                continue;
            }
            return Err(PatchError::Malformed(format!("content before first hunk: {line:?}")));
        };
        match line.split_at_checked(1) {
            Some((" ", rest)) => {
                hunk.old.push(rest.to_string());
                hunk.new.push(rest.to_string());
            }
            Some(("-", rest)) => hunk.old.push(rest.to_string()),
            Some(("+", rest)) => hunk.new.push(rest.to_string()),
            None => {
                hunk.old.push(String::new());
                hunk.new.push(String::new());
            }
            _ => return Err(PatchError::Malformed(format!("unexpected line {line:?}"))),
        }
    }
    if hunks.is_empty() {
        return Err(PatchError::Malformed("no hunks".into()));
    }
    Ok(hunks)
}

/// Applies every hunk. A hunk whose old lines moved is placed at the
/// nearest exact match; a hunk with no exact match fails the whole patch.
pub fn apply_unified(original: &str, patch: &str) -> Result<String, PatchError> {
    let hunks = parse(patch)?;
    let mut lines: Vec<String> = original.lines().map(str::to_string).collect();
    let mut offset: isize = 0;
    for (i, hunk) in hunks.iter().enumerate() {
        let expected = if hunk.old.is_empty() {
            // Pure insertion after line `old_start`.
            hunk.old_start as isize + offset
        } else {
            hunk.old_start as isize - 1 + offset
        };
        let at = locate(&lines, &hunk.old, expected).ok_or(PatchError::NoMatch { hunk: i + 1 })?;
        lines.splice(at..at + hunk.old.len(), hunk.new.iter().cloned());
        offset += hunk.new.len() as isize - hunk.old.len() as isize + (at as isize - expected);
    }
    let mut out = lines.join("\n");
    if original.ends_with('\n') && !lines.is_empty() {
        out.push('\n');
    }
    Ok(out)
}

fn locate(lines: &[String], old: &[String], expected: isize) -> Option<usize> {
    let max_start = lines.len().checked_sub(old.len())?;
    if old.is_empty() {
        return (0..=max_start as isize)
            .contains(&expected)
            .then_some(expected as usize);
    }
    let matches_at = |s: usize| lines[s..s + old.len()] == *old;
    if expected >= 0 && (expected as usize) <= max_start && matches_at(expected as usize) {
        return Some(expected as usize);
    }
    (0..=max_start)
        .filter(|s| matches_at(*s))
        .min_by_key(|s| (*s as isize - expected).abs())
}
