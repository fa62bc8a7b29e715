//! Synthetic datasets with known signal placement, and scripted agents
//! that read them.
//!
//! Every record carries, per agent, a `<Domain> Signal` feature holding a
//! severity class and a `<Domain> Strength` feature holding the confidence
//! that agent will report. A signal equals the true label with the agent's
//! configured accuracy and is otherwise drawn uniformly from the other three
//! classes, so an accuracy of 0.25 is pure noise. Signals are independent
//! given the label.

use indexmap::IndexMap;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::ScriptedAgent;
use crate::agents::ScriptedBackend;
use crate::features::{AccidentRecord, FeatureKind, FeatureMap, FeatureRegistry, FeatureSpec, FeatureValue};
use crate::types::{AgentId, AgentOutput, FailureKind, Severity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentProfile {
    /// Probability the agent's signal equals the label.
    pub accuracy: f64,
    /// Mean reported confidence.
    pub confidence: f64,
    /// Reported confidence is uniform in `confidence ± spread`.
    pub spread: f64,
}

impl AgentProfile {
    pub fn new(accuracy: f64, confidence: f64) -> Self {
        AgentProfile {
            accuracy,
            confidence,
            spread: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub class_shares: [f64; 4],
    pub agents: IndexMap<AgentId, AgentProfile>,
}

impl SyntheticSpec {
    /// Balanced labels, every agent at the same accuracy and confidence.
    pub fn uniform(size: usize, accuracy: f64, confidence: f64) -> Self {
        SyntheticSpec {
            size,
            class_shares: [0.25; 4],
            agents: AgentId::ALL
                .iter()
                .map(|&a| (a, AgentProfile::new(accuracy, confidence)))
                .collect(),
        }
    }

    pub fn with_agent(mut self, id: AgentId, profile: AgentProfile) -> Self {
        self.agents.insert(id, profile);
        self
    }
}

fn domain_word(id: AgentId) -> &'static str {
    match id {
        AgentId::Ml => "Model",
        AgentId::Environmental => "Environment",
        AgentId::Infrastructural => "Infrastructure",
        AgentId::Spatial => "Spatial",
        AgentId::Temporal => "Temporal",
    }
}

pub fn signal_feature(id: AgentId) -> String {
    format!("{} Signal", domain_word(id))
}

pub fn strength_feature(id: AgentId) -> String {
    format!("{} Strength", domain_word(id))
}

/// Registry placing each agent's signal and strength in its own domain.
/// The ML agent's pair is ML-only.
pub fn synthetic_registry() -> FeatureRegistry {
    let specs = AgentId::ALL
        .iter()
        .flat_map(|&id| {
            let domains = if id.is_slm() { vec![id] } else { vec![] };
            [signal_feature(id), strength_feature(id)].map(|name| FeatureSpec {
                name,
                domains: domains.clone(),
                kind: FeatureKind::Numeric,
                unit: None,
            })
        })
        .collect();
    FeatureRegistry::new(specs).expect("synthetic registry is valid")
}

pub fn generate(spec: &SyntheticSpec, seed: u64) -> Vec<AccidentRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = WeightedIndex::new(spec.class_shares).expect("class shares are valid weights");
    (0..spec.size)
        .map(|i| {
            let y = labels.sample(&mut rng);
            let mut r = AccidentRecord::new(format!("syn-{i:05}")).labeled(Severity::from_index(y).expect("index < 4"));
            for (&id, p) in &spec.agents {
                let signal = if rng.random_bool(p.accuracy.clamp(0.0, 1.0)) {
                    y
                } else {
                    let other = rng.random_range(0..3);
                    if other >= y { other + 1 } else { other }
                };
                let strength = (p.confidence + rng.random_range(-1.0..=1.0) * p.spread).clamp(0.0, 1.0);
                r = r
                    .with(signal_feature(id), FeatureValue::numeric((signal + 1) as f64))
                    .with(strength_feature(id), FeatureValue::numeric((strength * 1e4).round() / 1e4));
            }
            r
        })
        .collect()
}

fn read_signal(id: AgentId, f: &FeatureMap) -> Option<(Severity, f64)> {
    let k = f.get(&signal_feature(id))?.as_f64()?;
    let c = f.get(&strength_feature(id))?.as_f64()?;
    Some((Severity::new(k as i64).ok()?, c))
}

/// An agent that reports its own signal at its own strength. Records
/// without the signal yield a parse failure.
pub fn signal_agent(id: AgentId) -> ScriptedAgent {
    ScriptedAgent::new(id, move |f| match read_signal(id, f) {
        Some((k, c)) => AgentOutput::new(id, k, c).with_reasoning(format!("{} reads {k}", signal_feature(id))),
        None => AgentOutput::failed(id, FailureKind::Parse),
    })
}

struct Report {
    severity: Severity,
    confidence: f64,
    weight: f64,
}

fn read_reports(prompt: &str) -> Vec<Report> {
    let mut out = Vec::new();
    let mut cur: (Option<Severity>, Option<f64>) = (None, None);
    for line in prompt.lines() {
        if let Some(v) = line.strip_prefix("severity: ") {
            cur.0 = v.trim().parse().ok();
        } else if let Some(v) = line.strip_prefix("confidence: ") {
            cur.1 = v.trim().parse().ok();
        } else if let Some(v) = line.strip_prefix("weight: ") {
            if let ((Some(severity), Some(confidence)), Ok(weight)) = (cur, v.trim().parse()) {
                out.push(Report {
                    severity,
                    confidence,
                    weight,
                });
            }
            cur = (None, None);
        }
    }
    out
}

fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// A stand-in language-model coordinator. It reads the agent reports out of
/// the meta-prompt and answers with the class of largest `weight ×
/// confidence` mass, ignoring class rarity. A fixed share of prompts,
/// chosen by a hash of the prompt text, gets an unparseable reply instead.
pub fn fallible_coordinator(fail_rate: f64) -> ScriptedBackend {
    let threshold = (fail_rate.clamp(0.0, 1.0) * 10_000.0).round() as u64;
    ScriptedBackend::new(move |prompt| {
        if fnv1a(prompt) % 10_000 < threshold {
            return "The reports conflict and I would rather not commit to one class.".into();
        }
        let mut mass = [0.0f64; 4];
        let mut conf = [0.0f64; 4];
        let mut n = [0usize; 4];
        for r in read_reports(prompt) {
            mass[r.severity.index()] += r.weight * r.confidence;
            conf[r.severity.index()] += r.confidence;
            n[r.severity.index()] += 1;
        }
        let best = (0..4).fold(0, |b, k| if mass[k] > mass[b] { k } else { b });
        let c = if n[best] == 0 { 0.5 } else { conf[best] / n[best] as f64 };
        format!(
            r#"{{"severity": {}, "confidence": {c:.4}, "reasoning": "largest weighted support"}}"#,
            best + 1
        )
    })
}
