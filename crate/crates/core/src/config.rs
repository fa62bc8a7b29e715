//! Engine configuration: voting weights, class factors, thresholds,
//! calibration constants, decoding parameters and backend endpoints.
//!
//! A config is loaded from a single JSON document whose keys mirror the
//! field names below. Absent fields take their defaults, including absent
//! entries inside `agent_weights` and `class_factors`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::types::{AgentId, Severity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoordinationMode {
    #[default]
    RuleBased,
    LlmBased,
    /// Unweighted plurality vote; used as the coordinator-degradation
    /// baseline in ablation runs.
    MajorityVote,
}

impl fmt::Display for CoordinationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoordinationMode::RuleBased => "rule_based",
            CoordinationMode::LlmBased => "llm_based",
            CoordinationMode::MajorityVote => "majority_vote",
        })
    }
}

/// Piecewise rare-class confidence boost applied to language-model agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub high_cap: f64,
    pub high_delta: f64,
    pub high_gate: f64,
    pub mid_cap: f64,
    pub mid_delta: f64,
    pub mid_gate: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            high_cap: 0.98,
            high_delta: 0.1,
            high_gate: 0.8,
            mid_cap: 0.9,
            mid_delta: 0.05,
            mid_gate: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub max_new_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            temperature: 0.2,
            top_p: 0.90,
            repetition_penalty: 1.1,
            max_new_tokens: 256,
        }
    }
}

/// A canned response for the scripted backend: the first rule whose
/// `contains` text occurs in the prompt wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub contains: String,
    pub response: String,
    #[serde(default)]
    pub delay_ms: u64,
}

/// Where language-model completions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Chat-completions compatible HTTP endpoint.
    Remote {
        endpoint: String,
        model: String,
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default = "default_true")]
        send_repetition_penalty: bool,
    },
    /// Deterministic prompt → response table.
    Scripted {
        #[serde(default)]
        rules: Vec<ScriptRule>,
        default_response: String,
    },
}

fn default_api_key_env() -> String {
    "MARBLE_API_KEY".to_string()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(deserialize_with = "weights_over_defaults")]
    pub agent_weights: BTreeMap<AgentId, f64>,
    #[serde(deserialize_with = "factors_over_defaults")]
    pub class_factors: BTreeMap<Severity, f64>,
    pub tau_ml_high: f64,
    pub tau_ml_corrob: f64,
    pub tau_coord_rare: f64,
    pub tau_coord_common: f64,
    pub w1_rare: f64,
    pub w1_common: f64,
    pub boost_rare: f64,
    pub boost_common: f64,
    /// SLM agreement ratio that must be strictly exceeded to earn a boost.
    pub boost_ratio_gate: f64,
    /// Minimum SLM supporters for the rare-class boost.
    pub boost_min_rare_supporters: usize,
    /// Added to the ML confidence when a rare-class ML override fires.
    pub override_rare_bonus: f64,
    pub confidence_cap: f64,
    pub fallback_confidence: f64,
    pub calibration: CalibrationConfig,
    pub agent_timeout_ms: u64,
    pub decoding: DecodingConfig,
    pub coordination_mode: CoordinationMode,
    pub tie_epsilon: f64,
    /// Backend for the language-model agents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendSpec>,
    /// Backend for LLM-based coordination; falls back to `backend`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinator_backend: Option<BackendSpec>,
}

pub fn default_agent_weights() -> BTreeMap<AgentId, f64> {
    BTreeMap::from([
        (AgentId::Ml, 3.0),
        (AgentId::Environmental, 1.5),
        (AgentId::Infrastructural, 1.2),
        (AgentId::Spatial, 1.0),
        (AgentId::Temporal, 1.0),
    ])
}

pub fn default_class_factors() -> BTreeMap<Severity, f64> {
    BTreeMap::from([
        (Severity::ONE, 1.2),
        (Severity::TWO, 1.0),
        (Severity::THREE, 1.0),
        (Severity::FOUR, 1.2),
    ])
}

fn weights_over_defaults<'de, D: Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<AgentId, f64>, D::Error> {
    let given = BTreeMap::<AgentId, f64>::deserialize(d)?;
    let mut out = default_agent_weights();
    out.extend(given);
    Ok(out)
}

fn factors_over_defaults<'de, D: Deserializer<'de>>(
    d: D,
) -> Result<BTreeMap<Severity, f64>, D::Error> {
    let given = BTreeMap::<Severity, f64>::deserialize(d)?;
    let mut out = default_class_factors();
    out.extend(given);
    Ok(out)
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            agent_weights: default_agent_weights(),
            class_factors: default_class_factors(),
            tau_ml_high: 0.75,
            tau_ml_corrob: 0.8,
            tau_coord_rare: 0.4,
            tau_coord_common: 0.5,
            w1_rare: 0.7,
            w1_common: 0.5,
            boost_rare: 0.1,
            boost_common: 0.05,
            boost_ratio_gate: 0.5,
            boost_min_rare_supporters: 2,
            override_rare_bonus: 0.15,
            confidence_cap: 0.95,
            fallback_confidence: 0.1,
            calibration: CalibrationConfig::default(),
            agent_timeout_ms: 8000,
            decoding: DecodingConfig::default(),
            coordination_mode: CoordinationMode::RuleBased,
            tie_epsilon: 1e-9,
            backend: None,
            coordinator_backend: None,
        }
    }
}

impl EngineConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig =
            serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))?;
        cfg.validate()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Returns the config unchanged if every invariant holds, otherwise the
    /// first violation.
    pub fn validate(self) -> Result<Self, ConfigError> {
        for agent in AgentId::ALL {
            match self.agent_weights.get(&agent) {
                None => return Err(ConfigError(format!("agent_weights.{agent} missing"))),
                Some(w) => positive(&format!("agent_weights.{agent}"), *w)?,
            }
        }
        for class in Severity::ALL {
            match self.class_factors.get(&class) {
                None => return Err(ConfigError(format!("class_factors.{class} missing"))),
                Some(f) => positive(&format!("class_factors.{class}"), *f)?,
            }
        }
        for (name, v) in [
            ("tau_ml_high", self.tau_ml_high),
            ("tau_ml_corrob", self.tau_ml_corrob),
            ("tau_coord_rare", self.tau_coord_rare),
            ("tau_coord_common", self.tau_coord_common),
            ("w1_rare", self.w1_rare),
            ("w1_common", self.w1_common),
            ("boost_ratio_gate", self.boost_ratio_gate),
            ("confidence_cap", self.confidence_cap),
            ("fallback_confidence", self.fallback_confidence),
            ("calibration.high_cap", self.calibration.high_cap),
            ("calibration.high_gate", self.calibration.high_gate),
            ("calibration.mid_cap", self.calibration.mid_cap),
            ("calibration.mid_gate", self.calibration.mid_gate),
            ("decoding.top_p", self.decoding.top_p),
        ] {
            unit_interval(name, v)?;
        }
        for (name, v) in [
            ("boost_rare", self.boost_rare),
            ("boost_common", self.boost_common),
            ("override_rare_bonus", self.override_rare_bonus),
            ("calibration.high_delta", self.calibration.high_delta),
            ("calibration.mid_delta", self.calibration.mid_delta),
            ("decoding.repetition_penalty", self.decoding.repetition_penalty),
        ] {
            positive(name, v)?;
        }
        if self.calibration.high_cap < self.calibration.high_gate {
            return Err(ConfigError(
                "calibration.high_cap must be >= calibration.high_gate".into(),
            ));
        }
        if self.calibration.mid_cap < self.calibration.mid_gate {
            return Err(ConfigError(
                "calibration.mid_cap must be >= calibration.mid_gate".into(),
            ));
        }
        if !(self.decoding.temperature.is_finite() && self.decoding.temperature >= 0.0) {
            return Err(ConfigError("decoding.temperature must be >= 0".into()));
        }
        if self.decoding.max_new_tokens == 0 {
            return Err(ConfigError("decoding.max_new_tokens must be > 0".into()));
        }
        if self.agent_timeout_ms == 0 {
            return Err(ConfigError("agent_timeout_ms must be > 0".into()));
        }
        if !(self.tie_epsilon.is_finite() && self.tie_epsilon >= 0.0) {
            return Err(ConfigError("tie_epsilon must be >= 0".into()));
        }
        Ok(self)
    }

    pub fn weight(&self, agent: AgentId) -> f64 {
        self.agent_weights[&agent]
    }

    pub fn class_factor(&self, class: Severity) -> f64 {
        self.class_factors[&class]
    }

    pub fn tau_coord(&self, class: Severity) -> f64 {
        if class.is_rare() {
            self.tau_coord_rare
        } else {
            self.tau_coord_common
        }
    }

    pub fn w1(&self, class: Severity) -> f64 {
        if class.is_rare() {
            self.w1_rare
        } else {
            self.w1_common
        }
    }

    /// Backend used by the LLM coordinator.
    pub fn effective_coordinator_backend(&self) -> Option<&BackendSpec> {
        self.coordinator_backend.as_ref().or(self.backend.as_ref())
    }

    /// Stable SHA-256 of the serialized config, hex encoded.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError(format!("{name} must be > 0")))
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError(format!("{name} must lie in [0,1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = EngineConfig::default().validate().unwrap();
        assert_eq!(
            AgentId::ALL.map(|a| cfg.weight(a)),
            [3.0, 1.5, 1.2, 1.0, 1.0]
        );
        assert_eq!(Severity::ALL.map(|s| cfg.class_factor(s)), [1.2, 1.0, 1.0, 1.2]);
        assert!(cfg.tau_coord_rare < cfg.tau_coord_common);
    }

    #[test]
    fn zero_ml_weight_rejected() {
        let mut cfg = EngineConfig::default();
        cfg.agent_weights.insert(AgentId::Ml, 0.0);
        assert_eq!(
            cfg.validate().unwrap_err(),
            ConfigError("agent_weights.ML must be > 0".into())
        );
    }

    #[test]
    fn out_of_range_threshold_rejected() {
        let cfg = EngineConfig {
            tau_ml_high: 1.3,
            ..EngineConfig::default()
        };
        assert_eq!(
            cfg.validate().unwrap_err(),
            ConfigError("tau_ml_high must lie in [0,1]".into())
        );
    }

    #[test]
    fn cap_below_gate_rejected() {
        let mut cfg = EngineConfig::default();
        cfg.calibration.mid_cap = 0.5;
        assert!(cfg.validate().unwrap_err().0.contains("mid_cap"));
    }

    #[test]
    fn partial_document_fills_defaults() {
        let cfg = EngineConfig::from_json_str(
            r#"{"agent_weights": {"Spatial": 2.0}, "class_factors": {"4": 1.5}, "coordination_mode": "llm_based"}"#,
        )
        .unwrap();
        assert_eq!(cfg.weight(AgentId::Spatial), 2.0);
        assert_eq!(cfg.weight(AgentId::Ml), 3.0);
        assert_eq!(cfg.class_factor(Severity::FOUR), 1.5);
        assert_eq!(cfg.class_factor(Severity::ONE), 1.2);
        assert_eq!(cfg.coordination_mode, CoordinationMode::LlmBased);
        assert_eq!(cfg.agent_timeout_ms, 8000);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(EngineConfig::from_json_str(r#"{"tau_ml_hgih": 0.7}"#).is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = EngineConfig::default();
        let mut b = EngineConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.tie_epsilon = 1e-6;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn backend_spec_parses() {
        let cfg = EngineConfig::from_json_str(
            r#"{"backend": {"kind": "remote", "endpoint": "http://localhost:1/v1/chat/completions", "model": "m"}}"#,
        )
        .unwrap();
        match cfg.backend.unwrap() {
            BackendSpec::Remote { api_key_env, send_repetition_penalty, .. } => {
                assert_eq!(api_key_env, "MARBLE_API_KEY");
                assert!(send_repetition_penalty);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn json_round_trip(
                ws in proptest::array::uniform5(0.01f64..10.0),
                fs in proptest::array::uniform4(0.01f64..5.0),
                taus in proptest::array::uniform4(0.0f64..=1.0),
                timeout in 1u64..60_000,
                mode in prop_oneof![Just(CoordinationMode::RuleBased), Just(CoordinationMode::LlmBased)],
            ) {
                let mut cfg = EngineConfig::default();
                for (a, w) in AgentId::ALL.iter().zip(ws) {
                    cfg.agent_weights.insert(*a, w);
                }
                for (s, f) in Severity::ALL.iter().zip(fs) {
                    cfg.class_factors.insert(*s, f);
                }
                cfg.tau_ml_high = taus[0];
                cfg.tau_ml_corrob = taus[1];
                cfg.tau_coord_rare = taus[2];
                cfg.tau_coord_common = taus[3];
                cfg.agent_timeout_ms = timeout;
                cfg.coordination_mode = mode;
                cfg.backend = Some(BackendSpec::Scripted { rules: vec![], default_response: "{}".into() });
                let text = serde_json::to_string(&cfg).unwrap();
                let back = EngineConfig::from_json_str(&text).unwrap();
                prop_assert_eq!(back, cfg);
            }
        }
    }
}
