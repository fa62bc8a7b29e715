use std::sync::Arc;
use std::time::Duration;

use crate::config::{BackendSpec, DecodingConfig, ScriptRule};
use crate::types::FailureKind;

use super::remote::RemoteBackend;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        message: String,
    },
    #[error("no response within {after_ms} ms")]
    Timeout { after_ms: u64 },
}

impl BackendError {
    pub fn kind(&self) -> FailureKind {
        match self {
            BackendError::Transport { .. } => FailureKind::Transport,
            BackendError::Timeout { .. } => FailureKind::Timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    /// Out-of-band remarks surfaced in the trace (e.g. a dropped parameter).
    pub notes: Vec<String>,
}

impl From<String> for Completion {
    fn from(text: String) -> Self {
        Completion {
            text,
            notes: Vec::new(),
        }
    }
}

/// A text-completion model. Implementations must honor `timeout` and
/// tolerate concurrent calls.
pub trait SlmBackend: Send + Sync {
    fn complete(
        &self,
        prompt: &str,
        decoding: &DecodingConfig,
        timeout: Duration,
    ) -> Result<Completion, BackendError>;
}

type Responder = dyn Fn(&str) -> Result<String, BackendError> + Send + Sync;

/// Deterministic backend for tests and offline runs: the reply is a pure
/// function of the prompt text. A configured delay longer than the timeout
/// sleeps for the timeout and then reports it.
pub struct ScriptedBackend {
    responder: Box<Responder>,
    delay: Box<dyn Fn(&str) -> Duration + Send + Sync>,
}

impl ScriptedBackend {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&str) -> String + Send + Sync + 'static,
    {
        ScriptedBackend {
            responder: Box::new(move |p| Ok(f(p))),
            delay: Box::new(|_| Duration::ZERO),
        }
    }

    /// Always replies with the same text.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| text.clone())
    }

    pub fn fallible<F>(f: F) -> Self
    where
        F: Fn(&str) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        ScriptedBackend {
            responder: Box::new(f),
            delay: Box::new(|_| Duration::ZERO),
        }
    }

    /// First rule whose `contains` text occurs in the prompt wins.
    pub fn from_rules(rules: Vec<ScriptRule>, default_response: String) -> Self {
        let rules = Arc::new(rules);
        let for_delay = Arc::clone(&rules);
        ScriptedBackend {
            responder: Box::new(move |prompt| {
                Ok(rules
                    .iter()
                    .find(|r| prompt.contains(&r.contains))
                    .map(|r| r.response.clone())
                    .unwrap_or_else(|| default_response.clone()))
            }),
            delay: Box::new(move |prompt| {
                for_delay
                    .iter()
                    .find(|r| prompt.contains(&r.contains))
                    .map(|r| Duration::from_millis(r.delay_ms))
                    .unwrap_or(Duration::ZERO)
            }),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Box::new(move |_| delay);
        self
    }
}

impl SlmBackend for ScriptedBackend {
    fn complete(
        &self,
        prompt: &str,
        _decoding: &DecodingConfig,
        timeout: Duration,
    ) -> Result<Completion, BackendError> {
        let delay = (self.delay)(prompt);
        if delay > timeout {
            std::thread::sleep(timeout);
            return Err(BackendError::Timeout {
                after_ms: timeout.as_millis() as u64,
            });
        }
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        (self.responder)(prompt).map(Completion::from)
    }
}

/// Instantiates the backend described by a config entry.
pub fn backend_from_spec(spec: &BackendSpec) -> Arc<dyn SlmBackend> {
    match spec {
        BackendSpec::Remote {
            endpoint,
            model,
            api_key_env,
            send_repetition_penalty,
        } => {
            let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
            Arc::new(
                RemoteBackend::new(endpoint.clone(), model.clone(), api_key)
                    .send_repetition_penalty(*send_repetition_penalty),
            )
        }
        BackendSpec::Scripted {
            rules,
            default_response,
        } => Arc::new(ScriptedBackend::from_rules(
            rules.clone(),
            default_response.clone(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_match_in_order() {
        let b = ScriptedBackend::from_rules(
            vec![
                ScriptRule { contains: "Rain".into(), response: "wet".into(), delay_ms: 0 },
                ScriptRule { contains: "R".into(), response: "r".into(), delay_ms: 0 },
            ],
            "dry".into(),
        );
        let d = DecodingConfig::default();
        let t = Duration::from_secs(1);
        assert_eq!(b.complete("Weather: Rain", &d, t).unwrap().text, "wet");
        assert_eq!(b.complete("Road", &d, t).unwrap().text, "r");
        assert_eq!(b.complete("Sun", &d, t).unwrap().text, "dry");
    }

    #[test]
    fn delay_beyond_timeout_reports_timeout() {
        let b = ScriptedBackend::constant("x").with_delay(Duration::from_millis(200));
        let err = b
            .complete("p", &DecodingConfig::default(), Duration::from_millis(20))
            .unwrap_err();
        assert_eq!(err, BackendError::Timeout { after_ms: 20 });
        assert_eq!(err.kind(), FailureKind::Timeout);
    }
}
