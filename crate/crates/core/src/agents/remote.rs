//! Client for chat-completions compatible endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::DecodingConfig;

use super::backend::{BackendError, Completion, SlmBackend};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body. `repetition_penalty` is a non-standard extension that
/// many local inference servers accept.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetition_penalty: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    send_repetition_penalty: bool,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            send_repetition_penalty: true,
            agent,
        }
    }

    pub fn send_repetition_penalty(mut self, on: bool) -> Self {
        self.send_repetition_penalty = on;
        self
    }

    pub fn request_body(&self, prompt: &str, decoding: &DecodingConfig, with_penalty: bool) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt.to_string(),
            }],
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            max_tokens: decoding.max_new_tokens,
            repetition_penalty: with_penalty.then_some(decoding.repetition_penalty),
        }
    }

    fn post(&self, body: &ChatRequest, timeout: Duration) -> Result<(u16, String), BackendError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| map_err(e, timeout))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| map_err(e, timeout))?;
        Ok((status, text))
    }
}

fn map_err(e: ureq::Error, timeout: Duration) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout {
            after_ms: timeout.as_millis() as u64,
        },
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout {
            after_ms: timeout.as_millis() as u64,
        },
        ureq::Error::StatusCode(s) => BackendError::Transport {
            status: Some(s),
            message: format!("HTTP {s}"),
        },
        other => BackendError::Transport {
            status: None,
            message: other.to_string(),
        },
    }
}

impl SlmBackend for RemoteBackend {
    /// One request carrying the prompt as a single user message. If the
    /// endpoint rejects the request with HTTP 400 while a repetition penalty
    /// was sent, it is retried once without it and a note is attached.
    fn complete(
        &self,
        prompt: &str,
        decoding: &DecodingConfig,
        timeout: Duration,
    ) -> Result<Completion, BackendError> {
        let started = std::time::Instant::now();
        let mut notes = Vec::new();
        let mut body = self.request_body(prompt, decoding, self.send_repetition_penalty);
        let (mut status, mut text) = self.post(&body, timeout)?;
        if status == 400 && body.repetition_penalty.is_some() {
            let remaining = timeout.saturating_sub(started.elapsed());
            if remaining.is_zero() {
                return Err(BackendError::Timeout {
                    after_ms: timeout.as_millis() as u64,
                });
            }
            body.repetition_penalty = None;
            notes.push("repetition_penalty dropped: endpoint rejected it".to_string());
            (status, text) = self.post(&body, remaining)?;
        }
        if status >= 400 {
            return Err(BackendError::Transport {
                status: Some(status),
                message: text.chars().take(200).collect(),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| BackendError::Transport {
            status: Some(status),
            message: format!("malformed completion body: {e}"),
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport {
                status: Some(status),
                message: "completion has no choices".into(),
            })?;
        Ok(Completion { text: content, notes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_carries_decoding_parameters() {
        let b = RemoteBackend::new("http://x", "smol", None);
        let body = b.request_body("hello", &DecodingConfig::default(), true);
        let v = serde_json::to_value(&body).unwrap();
        assert_eq!(v["model"], "smol");
        assert_eq!(v["messages"][0]["role"], "user");
        assert_eq!(v["messages"][0]["content"], "hello");
        assert_eq!(v["temperature"], 0.2);
        assert_eq!(v["top_p"], 0.9);
        assert_eq!(v["max_tokens"], 256);
        assert_eq!(v["repetition_penalty"], 1.1);
        let v = serde_json::to_value(b.request_body("hello", &DecodingConfig::default(), false)).unwrap();
        assert!(v.get("repetition_penalty").is_none());
    }
}
