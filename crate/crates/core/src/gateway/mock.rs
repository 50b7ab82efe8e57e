use std::collections::BTreeSet;

use crate::codegraph::extract::path_stem;
use crate::error::Result;
use crate::estimate_tokens;
use crate::orchestrator::patch::deletion_patch;
use crate::prompt::{Prompt, TaskKind};

use super::markers::{scan_markers, MarkerKind};
use super::{render_raw, Backend, ModelResponse, SuggestionDraft, SuggestionKind, Usage};

/// Deterministic stand-in model.
///
/// It reports one bug fix per `LOCAL` marker found in any context snippet,
/// and one per `XFILE` marker only when the peer file is also in the
/// prompt. For `GenerateTests` it adds a stub test for every marker-free,
/// non-test snippet whose test file is not already in context.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn generate(&self, prompt: &Prompt) -> Result<ModelResponse> {
        let snippets = &prompt.context.snippets;
        let in_prompt: BTreeSet<&str> = snippets.iter().map(|s| s.path.as_str()).collect();
        let mut drafts = Vec::new();

        for s in snippets {
            let markers = scan_markers(&s.text);
            for m in &markers {
                let line = s.line_range.0 + m.line_index as u32;
                let explanation = match &m.kind {
                    MarkerKind::Local => format!("fault {} flagged at {}:{}", m.fault_id, s.path, line),
                    MarkerKind::CrossFile { peer } => {
                        if !in_prompt.contains(peer.as_str()) {
                            continue;
                        }
                        format!(
                            "fault {} at {}:{} depends on behaviour in {}",
                            m.fault_id, s.path, line, peer
                        )
                    }
                };
                drafts.push(SuggestionDraft {
                    kind: SuggestionKind::BugFix,
                    path: s.path.clone(),
                    line_start: line,
                    line_end: line,
                    fault_id: Some(m.fault_id.clone()),
                    patch: deletion_patch(&s.path, line, &m.line_text),
                    explanation,
                    confidence: 1.0,
                });
            }

            if prompt.question.task == TaskKind::GenerateTests
                && markers.is_empty()
                && !looks_like_test(&s.path)
            {
                let (test_path, body) = test_stub(&s.path);
                if !in_prompt.contains(test_path.as_str()) {
                    drafts.push(SuggestionDraft {
                        kind: SuggestionKind::TestCase,
                        path: test_path,
                        line_start: 1,
                        line_end: 1,
                        fault_id: None,
                        patch: body,
                        explanation: format!("stub test exercising {}", s.path),
                        confidence: 1.0,
                    });
                }
            }
        }

        drafts.sort_by(|a, b| (&a.path, a.line_start).cmp(&(&b.path, b.line_start)));
        let raw = render_raw(&drafts);
        Ok(ModelResponse {
            usage: Usage {
                prompt_tokens: prompt.token_estimate(),
                completion_tokens: estimate_tokens(raw.len()),
            },
            raw,
            suggestions: drafts,
        })
    }
}

fn looks_like_test(path: &str) -> bool {
    let name = path.rsplit('/').next().unwrap_or(path);
    let stem = path_stem(path);
    path.split('/').any(|seg| seg == "tests")
        || stem.ends_with("_test")
        || name.starts_with("test_")
        || stem.ends_with("Tests")
}

/// Path and body of a generated test for `source`. The body references the
/// source so the dependency extractor links the new test to it.
pub fn test_stub(source: &str) -> (String, String) {
    let stem = path_stem(source);
    let ext = source
        .rsplit_once('.')
        .map(|(_, e)| e)
        .filter(|e| !e.contains('/'))
        .unwrap_or("txt");
    let test_path = format!("tests/{stem}_test.{ext}");
    let body = match ext {
        "swift" => format!(
            "@testable import {stem}\n\n// Generated test for {source}.\nfunc test_{stem}_smoke() {{\n}}\n"
        ),
        "rs" => format!(
            "use {stem};\n\n// Generated test for {source}.\n#[test]\nfn {stem}_smoke() {{}}\n"
        ),
        "py" => format!(
            "import {stem}\n\n# Generated test for {source}.\ndef test_{stem}_smoke():\n    pass\n"
        ),
        "c" | "cpp" => format!(
            "#include \"{stem}.h\"\n\n// Generated test for {source}.\nint main(void) {{ return 0; }}\n"
        ),
        "ts" => format!(
            "const subject = require(\"./{stem}\");\n\n// Generated test for {source}.\n"
        ),
        _ => format!("import {stem}\n\nGenerated test for {source}.\n"),
    };
    (test_path, body)
}
