use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::prompt::Prompt;

use super::{parse_response, Backend, ModelResponse, Usage};

const SYSTEM_PREAMBLE: &str = "You are a testing copilot. The user message is a JSON prompt with \
context, history, question and config blocks. Answer only with JSON of the form \
{\"suggestions\":[{\"kind\":\"bug_fix|test_case|completion\",\"path\":\"...\",\"line_start\":1,\
\"line_end\":1,\"fault_id\":null,\"patch\":\"unified diff or new file body\",\"explanation\":\"...\",\
\"confidence\":0.0}]}.";

/// Generic chat-completion adapter. See `docs/protocol.md` for the wire shape.
pub struct HttpChatBackend {
    url: String,
    key: Option<String>,
    retries: u32,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(url: String, key: Option<String>, retries: u32, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatBackend {
            url,
            key,
            retries,
            agent,
        }
    }

    pub fn request_body(prompt: &Prompt) -> Value {
        json!({
            "model": prompt.config.model,
            "temperature": prompt.config.temperature,
            "max_tokens": prompt.config.max_tokens,
            "messages": [
                {"role": "system", "content": SYSTEM_PREAMBLE},
                {"role": "user", "content": prompt.to_json()},
            ],
        })
    }

    /// One round trip. `Err((retryable, message))` on transport or status failure.
    fn attempt(&self, body: &Value) -> std::result::Result<String, (bool, String)> {
        let mut request = self.agent.post(&self.url);
        if let Some(key) = &self.key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| (true, e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            429 | 500..=599 => Err((true, format!("HTTP {status}: {text}"))),
            _ => Err((false, format!("HTTP {status}: {text}"))),
        }
    }
}

impl Backend for HttpChatBackend {
    fn generate(&self, prompt: &Prompt) -> Result<ModelResponse> {
        let body = Self::request_body(prompt);
        let mut attempts = 0;
        let text = loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => break text,
                Err((retryable, message)) => {
                    if !retryable || attempts > self.retries {
                        return Err(Error::Backend {
                            message,
                            retryable,
                            attempts,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(200 * u64::from(attempts)));
                }
            }
        };
        let envelope: Value = serde_json::from_str(&text).map_err(|e| Error::MalformedResponse {
            raw: text.clone(),
            reason: e.to_string(),
        })?;
        let raw = envelope["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::MalformedResponse {
                raw: text.clone(),
                reason: "missing choices[0].message.content".into(),
            })?
            .to_string();
        let suggestions = parse_response(&raw)?;
        let usage = Usage {
            prompt_tokens: envelope["usage"]["prompt_tokens"].as_u64().unwrap_or(0) as usize,
            completion_tokens: envelope["usage"]["completion_tokens"].as_u64().unwrap_or(0) as usize,
        };
        Ok(ModelResponse {
            raw,
            suggestions,
            usage,
        })
    }
}
