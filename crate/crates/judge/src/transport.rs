use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::JudgeConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Rate limits, server errors and network failures are worth retrying;
    /// a rejected request is not.
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            retryable: false,
        }
    }
}

/// One chat-completion round trip. Implementations must be shareable across
/// the batch worker threads.
pub trait ChatTransport: Sync {
    fn complete(&self, model: &str, messages: &[ChatMessage]) -> Result<String, TransportError>;
}

/// Blocking HTTP client for OpenAI-style chat-completions endpoints.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &JudgeConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty());
        Self {
            agent,
            endpoint: config.endpoint.clone(),
            api_key,
        }
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

impl ChatTransport for HttpTransport {
    fn complete(&self, model: &str, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(ChatRequest { model, messages })
            .map_err(|e| TransportError::retryable(format!("request to {} failed: {e}", self.endpoint)))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::retryable(format!("reading response body: {e}")))?;
        if !(200..300).contains(&status) {
            let message = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
            let retryable = status == 408 || status == 429 || status >= 500;
            return Err(TransportError { message, retryable });
        }
        extract_content(&body)
    }
}

fn extract_content(body: &str) -> Result<String, TransportError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| TransportError::fatal(format!("response is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| TransportError::fatal("response lacks choices[0].message.content"))
}
