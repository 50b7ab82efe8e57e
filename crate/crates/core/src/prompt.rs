//! Four-component JSON prompt: context, history, question, config.
//!
//! Inclusion policy under a total token budget: the question and config
//! blocks are always whole; context snippets follow in retrieval order up to
//! 60% of what remains; history entries fill the rest newest-first. Items
//! that do not fit are dropped whole. Serialization is compact with a fixed
//! key order, so identical inputs produce identical bytes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate_tokens;
use crate::retrieval::RankedSnippet;
use crate::time::Timestamp;

/// Share of the post-mandatory budget reserved for context snippets.
pub const CONTEXT_SHARE: f64 = 0.6;
/// Per-entry cap applied by [`aggregate_history`].
pub const HISTORY_ENTRY_TOKENS: usize = 500;
pub const TRUNCATION_MARKER: &str = " [truncated]";
pub const REJECTED_MARKER: &str = "\n[outcome: rejected]";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DetectBugs,
    SuggestFix,
    GenerateTests,
    AnalyzeTestResults,
    CompleteCode,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::DetectBugs,
        TaskKind::SuggestFix,
        TaskKind::GenerateTests,
        TaskKind::AnalyzeTestResults,
        TaskKind::CompleteCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::DetectBugs => "detect_bugs",
            TaskKind::SuggestFix => "suggest_fix",
            TaskKind::GenerateTests => "generate_tests",
            TaskKind::AnalyzeTestResults => "analyze_test_results",
            TaskKind::CompleteCode => "complete_code",
        }
    }
}

/// Instruction text per task, versioned so golden prompts can pin it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    pub version: String,
    pub detect_bugs: String,
    pub suggest_fix: String,
    pub generate_tests: String,
    pub analyze_test_results: String,
    pub complete_code: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            version: "v1".into(),
            detect_bugs:
                "Identify defects in the provided context; respond in the response JSON schema."
                    .into(),
            suggest_fix: "Propose a minimal patch for the defect at the focus location; respond in the response JSON schema.".into(),
            generate_tests: "Generate test cases covering the focus file and its dependencies; respond in the response JSON schema.".into(),
            analyze_test_results: "Analyze the latest test results against the provided context; respond in the response JSON schema.".into(),
            complete_code: "Complete or improve the code at the focus location; respond in the response JSON schema.".into(),
        }
    }
}

impl PromptTemplates {
    pub fn instruction(&self, task: TaskKind) -> &str {
        match task {
            TaskKind::DetectBugs => &self.detect_bugs,
            TaskKind::SuggestFix => &self.suggest_fix,
            TaskKind::GenerateTests => &self.generate_tests,
            TaskKind::AnalyzeTestResults => &self.analyze_test_results,
            TaskKind::CompleteCode => &self.complete_code,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub total_budget: usize,
    pub model: String,
    pub temperature: f64,
    pub mode: String,
    pub max_tokens: usize,
    /// Past exchanges offered to the prompt.
    pub history_entries: usize,
    pub templates: PromptTemplates,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            total_budget: 8000,
            model: "mock".into(),
            temperature: 0.2,
            mode: "testing".into(),
            max_tokens: 1024,
            history_entries: 6,
            templates: PromptTemplates::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub context: PromptContext,
    pub history: Vec<HistoryEntry>,
    pub question: Question,
    pub config: ModelSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub snippets: Vec<ContextSnippet>,
    pub summary: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSnippet {
    pub path: String,
    pub line_range: (u32, u32),
    pub score: f64,
    pub text: String,
}

impl From<&RankedSnippet> for ContextSnippet {
    fn from(s: &RankedSnippet) -> Self {
        ContextSnippet {
            path: s.path.clone(),
            line_range: s.line_range,
            score: s.score,
            text: s.text.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Copilot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub role: Role,
    pub content: String,
    pub at: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub task: TaskKind,
    pub focus_path: String,
    pub focus_line: u32,
    pub instruction: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model: String,
    pub temperature: f64,
    pub mode: String,
    pub max_tokens: usize,
}

impl Prompt {
    /// Canonical compact JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prompt serializes")
    }

    pub fn token_estimate(&self) -> usize {
        estimate_tokens(self.to_json().len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Focus {
    pub path: String,
    pub line: u32,
}

fn json_len<T: Serialize>(value: &T) -> usize {
    serde_json::to_string(value).expect("serializable").len()
}

/// Greedily keeps a prefix of `items` whose JSON array cost fits `allowance`
/// bytes, accounting for the separating commas.
fn take_fitting<T: Serialize + Clone>(items: impl Iterator<Item = T>, allowance: usize) -> (Vec<T>, usize) {
    let mut kept = Vec::new();
    let mut used = 0;
    for item in items {
        let cost = json_len(&item) + usize::from(!kept.is_empty());
        if used + cost > allowance {
            break;
        }
        used += cost;
        kept.push(item);
    }
    (kept, used)
}

/// Assembles a prompt whose token estimate never exceeds `total_budget`.
/// `history` must be chronological (newest last).
pub fn construct_prompt(
    snippets: &[RankedSnippet],
    history: &[HistoryEntry],
    task: TaskKind,
    focus: &Focus,
    config: &PromptConfig,
    total_budget: usize,
) -> Result<Prompt> {
    let mut prompt = Prompt {
        context: PromptContext {
            snippets: Vec::new(),
            summary: format!("retrieved context for {}:{}", focus.path, focus.line),
        },
        history: Vec::new(),
        question: Question {
            task,
            focus_path: focus.path.clone(),
            focus_line: focus.line,
            instruction: config.templates.instruction(task).to_string(),
        },
        config: ModelSettings {
            model: config.model.clone(),
            temperature: config.temperature,
            mode: config.mode.clone(),
            max_tokens: config.max_tokens,
        },
    };

    // Work in bytes so the final ceil(bytes / 4) estimate stays in budget.
    let budget_bytes = total_budget * 4;
    let mandatory = json_len(&prompt);
    if mandatory > budget_bytes {
        return Err(Error::Budget {
            budget: total_budget,
            required: estimate_tokens(mandatory),
        });
    }
    let remaining = budget_bytes - mandatory;
    let context_allowance = (remaining as f64 * CONTEXT_SHARE).floor() as usize;
    let (kept, used) = take_fitting(snippets.iter().map(ContextSnippet::from), context_allowance);
    prompt.context.snippets = kept;

    let (mut recent, _) = take_fitting(history.iter().rev().cloned(), remaining - used);
    recent.reverse();
    prompt.history = recent;

    debug_assert!(prompt.token_estimate() <= total_budget);
    Ok(prompt)
}

/// One logged exchange between the developer and the engine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub at: Timestamp,
    pub role: Role,
    pub content: String,
    #[serde(default)]
    pub rejected: bool,
}

/// Cuts `text` to at most `max_bytes` on a char boundary, keeping the head.
pub fn truncate_tail(text: &str, max_bytes: usize) -> &str {
    if text.len() <= max_bytes {
        return text;
    }
    let mut cut = max_bytes;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    &text[..cut]
}

/// The newest `max_entries` interactions in chronological order, each capped
/// at 500 tokens. Rejected suggestions are shown to the model as copilot
/// turns carrying an outcome marker.
pub fn aggregate_history(log: &[Interaction], max_entries: usize) -> Vec<HistoryEntry> {
    let start = log.len().saturating_sub(max_entries);
    let cap = HISTORY_ENTRY_TOKENS * 4;
    log[start..]
        .iter()
        .map(|item| {
            let suffix = if item.rejected { REJECTED_MARKER } else { "" };
            let mut content = if item.content.len() + suffix.len() > cap {
                let keep = cap - suffix.len() - TRUNCATION_MARKER.len();
                format!("{}{TRUNCATION_MARKER}", truncate_tail(&item.content, keep))
            } else {
                item.content.clone()
            };
            content.push_str(suffix);
            HistoryEntry {
                role: if item.rejected { Role::Copilot } else { item.role },
                content,
                at: item.at,
            }
        })
        .collect()
}
