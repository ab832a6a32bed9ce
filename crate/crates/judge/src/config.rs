use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::JudgeError;

/// Default grading prompt. Placeholders: `{prompt}`, `{original}`,
/// `{lesioned}`. Lines holding `{prompt}` are dropped when the prompt is
/// withheld or unknown.
pub const DEFAULT_RUBRIC: &str = "\
You are grading how much a language model's answer degraded after one of its internal layers was disabled.
Rate the degradation of the modified response on a scale from 1 to 10, where a score of 1/10 means no degradation compared to the original response and 10/10 means full degradation with gibberish responses.

Question: {prompt}

Original response:
{original}

Modified response:
{lesioned}

Reply with the score as a single integer first, optionally followed by a one-sentence justification.";

/// Follow-up turn sent once when a reply holds no usable score.
pub const STRICT_REASK: &str =
    "Your previous reply did not contain a usable score. Reply with one integer from 1 to 10 and nothing else.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    /// Full chat-completions URL, e.g. `http://localhost:8000/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub rubric: String,
    /// Whether `{prompt}` is filled with the question the model answered.
    pub include_prompt: bool,
    pub max_concurrency: usize,
    /// Attempts per request, counting the first.
    pub retry_limit: u32,
    pub timeout_secs: f64,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token. Unset variable means
    /// no Authorization header, which suits local endpoints.
    pub api_key_env: Option<String>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "judge".into(),
            rubric: DEFAULT_RUBRIC.into(),
            include_prompt: true,
            max_concurrency: 4,
            retry_limit: 3,
            timeout_secs: 60.0,
            backoff_ms: 500,
            api_key_env: Some("MEDMAP_JUDGE_API_KEY".into()),
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        let bad = |m: &str| Err(JudgeError::Config(m.to_string()));
        if self.retry_limit < 1 {
            return bad("retry_limit must be at least 1");
        }
        if self.max_concurrency < 1 {
            return bad("max_concurrency must be at least 1");
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if !self.endpoint.starts_with("http://") && !self.endpoint.starts_with("https://") {
            return bad("endpoint must be an http(s) URL");
        }
        if self.model.is_empty() {
            return bad("model must not be empty");
        }
        for key in ["{original}", "{lesioned}"] {
            if !self.rubric.contains(key) {
                return Err(JudgeError::Config(format!("rubric lacks the {key} placeholder")));
            }
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << retry.min(16)))
    }

    pub fn render(&self, original: &str, lesioned: &str, prompt: Option<&str>) -> String {
        let prompt = prompt.filter(|_| self.include_prompt);
        let mut out = String::with_capacity(self.rubric.len() + original.len() + lesioned.len());
        let mut dropped = false;
        for (i, line) in self.rubric.split('\n').enumerate() {
            if line.contains("{prompt}") && prompt.is_none() {
                dropped = true;
                continue;
            }
            if std::mem::take(&mut dropped) && line.is_empty() {
                continue;
            }
            if i > 0 {
                out.push('\n');
            }
            // One pass per line so response text is never re-expanded.
            let mut rest = line;
            while let Some(pos) = rest.find('{') {
                out.push_str(&rest[..pos]);
                let tail = &rest[pos..];
                let (value, len) = if tail.starts_with("{original}") {
                    (original, 10)
                } else if tail.starts_with("{lesioned}") {
                    (lesioned, 10)
                } else if tail.starts_with("{prompt}") {
                    (prompt.unwrap_or(""), 8)
                } else {
                    ("{", 1)
                };
                out.push_str(value);
                rest = &tail[len..];
            }
            out.push_str(rest);
        }
        out
    }
}
