//! Agent functions: the statistical ML agent, the language-model domain
//! agents and scripted stand-ins for either.

pub mod backend;
pub mod ml;
pub mod parse;
pub mod prompt;
pub mod remote;

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::config::{CalibrationConfig, EngineConfig};
use crate::features::{format_features, FeatureMap};
use crate::types::{AgentId, AgentOutput, FailureKind, Severity};

pub use backend::{backend_from_spec, BackendError, Completion, ScriptedBackend, SlmBackend};
pub use ml::{ml_evaluate, output_from_posterior, MlModel, PosteriorModel, TrainError};
pub use parse::{parse_response, ParseError, ParsedResponse};
pub use prompt::{build_prompt, PromptTemplate};
pub use remote::RemoteBackend;

/// A stateless predictor over its projected features.
///
/// `evaluate` is total: failures come back as an output with `failed` set.
pub trait Agent: Send + Sync {
    fn id(&self) -> AgentId;
    fn evaluate(&self, features: &FeatureMap) -> AgentOutput;
}

/// Rare-class confidence boost for language-model agents. The high gate is
/// tested first; both gates are strict.
pub fn calibrate(raw: f64, prediction: Severity, cal: &CalibrationConfig) -> f64 {
    if prediction.is_rare() {
        if raw > cal.high_gate {
            return cal.high_cap.min(raw + cal.high_delta);
        }
        if raw > cal.mid_gate {
            return cal.mid_cap.min(raw + cal.mid_delta);
        }
    }
    raw
}

/// format → prompt → completion → extraction → calibration.
pub fn slm_evaluate(
    agent: AgentId,
    features: &FeatureMap,
    template: &PromptTemplate,
    backend: &dyn SlmBackend,
    cfg: &EngineConfig,
) -> AgentOutput {
    let started = Instant::now();
    let prompt = build_prompt(template, &format_features(features));
    let timeout = Duration::from_millis(cfg.agent_timeout_ms);
    let result = backend.complete(&prompt, &cfg.decoding, timeout);
    let elapsed = started.elapsed();
    let latency_ms = elapsed.as_millis() as u64;
    let done = |mut o: AgentOutput| {
        o.latency_ms = latency_ms;
        o
    };
    let completion = match result {
        // a reply that arrives after the deadline is discarded
        Ok(_) if elapsed > timeout => {
            return done(AgentOutput::failed(agent, FailureKind::Timeout));
        }
        Ok(c) => c,
        Err(e) => {
            return done(AgentOutput::failed(agent, e.kind()).with_note(e.to_string()));
        }
    };
    let parsed = match parse_response(&completion.text) {
        Ok(p) => p,
        Err(e) => {
            let mut o = AgentOutput::failed(agent, FailureKind::Parse).with_note(e.to_string());
            o.notes.extend(completion.notes);
            return done(o);
        }
    };
    let calibrated = calibrate(parsed.confidence, parsed.severity, &cfg.calibration);
    let mut out = AgentOutput::new(agent, parsed.severity, calibrated)
        .with_raw_confidence(parsed.confidence)
        .with_reasoning(parsed.reasoning);
    out.confidence_clamped |= parsed.confidence_clamped;
    if parsed.confidence_missing {
        out.notes.push("confidence not stated; default used".into());
    }
    out.notes.extend(completion.notes);
    done(out)
}

/// Domain agent backed by a language model.
pub struct SlmAgent {
    id: AgentId,
    template: PromptTemplate,
    backend: Arc<dyn SlmBackend>,
    cfg: Arc<EngineConfig>,
}

impl SlmAgent {
    /// Uses the built-in template for the domain.
    ///
    /// # Panics
    /// If `id` is the ML agent.
    pub fn new(id: AgentId, backend: Arc<dyn SlmBackend>, cfg: Arc<EngineConfig>) -> Self {
        let template = PromptTemplate::for_domain(id).expect("SlmAgent requires a language-model domain");
        SlmAgent {
            id,
            template,
            backend,
            cfg,
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }
}

impl Agent for SlmAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn evaluate(&self, features: &FeatureMap) -> AgentOutput {
        slm_evaluate(self.id, features, &self.template, self.backend.as_ref(), &self.cfg)
    }
}

pub struct MlAgent {
    model: Arc<dyn PosteriorModel>,
}

impl MlAgent {
    pub fn new(model: Arc<dyn PosteriorModel>) -> Self {
        MlAgent { model }
    }
}

impl Agent for MlAgent {
    fn id(&self) -> AgentId {
        AgentId::Ml
    }

    fn evaluate(&self, features: &FeatureMap) -> AgentOutput {
        let started = Instant::now();
        let mut out = ml_evaluate(self.model.as_ref(), features);
        out.latency_ms = started.elapsed().as_millis() as u64;
        out
    }
}

type AgentFn = dyn Fn(&FeatureMap) -> AgentOutput + Send + Sync;

/// An agent whose behaviour is a closure over its projected features.
pub struct ScriptedAgent {
    id: AgentId,
    f: Box<AgentFn>,
    delay: Duration,
}

impl ScriptedAgent {
    pub fn new<F>(id: AgentId, f: F) -> Self
    where
        F: Fn(&FeatureMap) -> AgentOutput + Send + Sync + 'static,
    {
        ScriptedAgent {
            id,
            f: Box::new(f),
            delay: Duration::ZERO,
        }
    }

    /// Always predicts `prediction` at `confidence`.
    pub fn fixed(id: AgentId, prediction: Severity, confidence: f64) -> Self {
        Self::new(id, move |_| AgentOutput::new(id, prediction, confidence))
    }

    pub fn failing(id: AgentId, kind: FailureKind) -> Self {
        Self::new(id, move |_| AgentOutput::failed(id, kind))
    }

    /// Sleeps before answering; used to exercise timeouts.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

impl Agent for ScriptedAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn evaluate(&self, features: &FeatureMap) -> AgentOutput {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let mut out = (self.f)(features);
        out.agent = self.id;
        out
    }
}
