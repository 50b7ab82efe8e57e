//! Model backends and the response schema.
//!
//! Every backend turns a [`Prompt`] into a [`ModelResponse`] whose raw text
//! follows `{"suggestions":[SuggestionDraft, ...]}`. The deterministic
//! [`MockBackend`] drives all automated testing; [`HttpChatBackend`] speaks a
//! generic chat-completion shape for real services.

mod http;
pub mod markers;
mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::Prompt;

pub use http::HttpChatBackend;
pub use mock::{test_stub, MockBackend};

pub const MODEL_URL_ENV: &str = "CTT_MODEL_URL";
pub const MODEL_KEY_ENV: &str = "CTT_MODEL_KEY";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    BugFix,
    TestCase,
    Completion,
}

impl SuggestionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SuggestionKind::BugFix => "bug_fix",
            SuggestionKind::TestCase => "test_case",
            SuggestionKind::Completion => "completion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionDraft {
    pub kind: SuggestionKind,
    pub path: String,
    pub line_start: u32,
    pub line_end: u32,
    pub fault_id: Option<String>,
    /// Unified diff for fixes and completions; the whole file for test cases.
    pub patch: String,
    pub explanation: String,
    pub confidence: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub raw: String,
    pub suggestions: Vec<SuggestionDraft>,
    pub usage: Usage,
}

pub trait Backend: Send + Sync {
    fn generate(&self, prompt: &Prompt) -> Result<ModelResponse>;
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Mock,
    HttpChat {
        /// Falls back to `CTT_MODEL_URL`.
        #[serde(default)]
        url: Option<String>,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_ms() -> u64 {
    60_000
}

pub fn build_backend(config: &BackendConfig) -> Result<Arc<dyn Backend>> {
    match config {
        BackendConfig::Mock => Ok(Arc::new(MockBackend)),
        BackendConfig::HttpChat {
            url,
            retries,
            timeout_ms,
        } => {
            let url = match url {
                Some(u) => u.clone(),
                None => std::env::var(MODEL_URL_ENV).map_err(|_| {
                    Error::Config(format!("http_chat backend needs a url or {MODEL_URL_ENV}"))
                })?,
            };
            let key = std::env::var(MODEL_KEY_ENV).ok();
            Ok(Arc::new(HttpChatBackend::new(url, key, *retries, *timeout_ms)))
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    suggestions: Vec<T>,
}

#[derive(Deserialize)]
struct RawDraft {
    kind: SuggestionKind,
    path: String,
    line_start: u32,
    line_end: u32,
    #[serde(default)]
    fault_id: Option<String>,
    #[serde(default)]
    patch: String,
    #[serde(default)]
    explanation: String,
    #[serde(default)]
    confidence: f64,
}

pub(crate) fn render_raw(suggestions: &[SuggestionDraft]) -> String {
    serde_json::to_string(&Envelope {
        suggestions: suggestions.to_vec(),
    })
    .expect("drafts serialize")
}

/// Parses the response schema. Unknown fields are ignored and confidence
/// is clamped to `[0, 1]`.
pub fn parse_response(raw: &str) -> Result<Vec<SuggestionDraft>> {
    let malformed = |reason: String| Error::MalformedResponse {
        raw: raw.to_string(),
        reason,
    };
    let envelope: Envelope<RawDraft> =
        serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
    envelope
        .suggestions
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d.line_start > d.line_end {
                return Err(malformed(format!(
                    "suggestion {i}: line_start {} > line_end {}",
                    d.line_start, d.line_end
                )));
            }
            let confidence = if d.confidence.is_nan() {
                0.0
            } else {
                d.confidence.clamp(0.0, 1.0)
            };
            Ok(SuggestionDraft {
                kind: d.kind,
                path: d.path,
                line_start: d.line_start,
                line_end: d.line_end,
                fault_id: d.fault_id,
                patch: d.patch,
                explanation: d.explanation,
                confidence,
            })
        })
        .collect()
}
