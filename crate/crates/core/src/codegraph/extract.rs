//! Lexical dependency extraction.
//!
//! A line matching `import X`, `#include "x.h"`, `use x`, `from x import` or
//! `require("x")` yields a reference to `X`. A reference resolves to the
//! first node, in path order, whose file stem or declared module name equals
//! it. Modules are declared with a `module X` / `package X` line or a
//! `// module: X` comment.

use std::sync::LazyLock;

use regex::Regex;

static IMPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:@testable\s+)?import\s+([A-Za-z_][\w.]*)").unwrap());
static INCLUDE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^\s*#\s*include\s+"([^"]+)""#).unwrap());
static USE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:pub(?:\([^)]*\))?\s+)?use\s+([A-Za-z_][\w:]*)").unwrap());
static FROM_IMPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*from\s+([A-Za-z_.][\w.]*)\s+import\b").unwrap());
static REQUIRE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"require\(\s*["']([^"']+)["']\s*\)"#).unwrap());
static MODULE_DECL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?://\s*module:\s*|module\s+|package\s+)([A-Za-z_]\w*)\s*;?\s*$").unwrap()
});

/// References and declared module names found in one file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extracted {
    /// Referenced names in first-occurrence order, deduplicated.
    pub refs: Vec<String>,
    pub modules: Vec<String>,
}

pub fn extract(text: &str) -> Extracted {
    let mut out = Extracted::default();
    for line in text.lines() {
        if let Some(name) = reference_on(line) {
            if !name.is_empty() && !out.refs.contains(&name) {
                out.refs.push(name);
            }
        }
        if let Some(c) = MODULE_DECL.captures(line) {
            let name = c[1].to_string();
            if !out.modules.contains(&name) {
                out.modules.push(name);
            }
        }
    }
    out
}

fn reference_on(line: &str) -> Option<String> {
    if let Some(c) = INCLUDE.captures(line) {
        return Some(path_stem(&c[1]).to_string());
    }
    if let Some(c) = FROM_IMPORT.captures(line) {
        return Some(last_dotted(&c[1]).to_string());
    }
    if let Some(c) = IMPORT.captures(line) {
        return Some(last_dotted(&c[1]).to_string());
    }
    if let Some(c) = USE.captures(line) {
        let segments = c[1]
            .split("::")
            .filter(|s| !s.is_empty() && !matches!(*s, "crate" | "super" | "self"));
        return segments.into_iter().next().map(str::to_string);
    }
    if let Some(c) = REQUIRE.captures(line) {
        return Some(path_stem(&c[1]).to_string());
    }
    None
}

fn last_dotted(name: &str) -> &str {
    name.rsplit('.').find(|s| !s.is_empty()).unwrap_or(name)
}

/// File name without directories and without the last extension.
pub fn path_stem(path: &str) -> &str {
    let file = path.rsplit('/').next().unwrap_or(path);
    match file.rfind('.') {
        Some(0) | None => file,
        Some(i) => &file[..i],
    }
}

/// Names a node answers to: its stem followed by its declared modules.
pub fn node_names(path: &str, text: &str) -> Vec<String> {
    let mut names = vec![path_stem(path).to_string()];
    for m in extract(text).modules {
        if !names.contains(&m) {
            names.push(m);
        }
    }
    names
}
