//! Domain types shared across the engine: severity labels, agent identities
//! and the per-agent output tuple.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Accident severity class in `{1, 2, 3, 4}`.
///
/// Classes 1 and 4 are the rare classes; 2 and 3 are the common ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Severity(u8);

impl Severity {
    pub const ONE: Severity = Severity(1);
    pub const TWO: Severity = Severity(2);
    pub const THREE: Severity = Severity(3);
    pub const FOUR: Severity = Severity(4);

    /// All classes in ascending order.
    pub const ALL: [Severity; 4] = [Self::ONE, Self::TWO, Self::THREE, Self::FOUR];

    pub fn new(value: i64) -> Result<Self, InvalidSeverity> {
        match value {
            1..=4 => Ok(Severity(value as u8)),
            other => Err(InvalidSeverity(other)),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based position, handy for indexing `[T; 4]` tables.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn is_rare(self) -> bool {
        matches!(self.0, 1 | 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("severity {0} is outside 1..=4")]
pub struct InvalidSeverity(pub i64);

impl TryFrom<u8> for Severity {
    type Error = InvalidSeverity;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Severity::new(value as i64)
    }
}

impl From<Severity> for u8 {
    fn from(s: Severity) -> u8 {
        s.0
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Severity {
    type Err = InvalidSeverity;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let value: i64 = match s.parse::<i64>() {
            Ok(v) => v,
            // tolerate "3.0" style labels from spreadsheet exports
            Err(_) => match s.parse::<f64>() {
                Ok(f) if f.fract() == 0.0 && f.is_finite() => f as i64,
                _ => return Err(InvalidSeverity(i64::MIN)),
            },
        };
        Severity::new(value)
    }
}

/// Identity of one of the five agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentId {
    #[serde(rename = "ML")]
    Ml,
    Environmental,
    Infrastructural,
    Spatial,
    Temporal,
}

impl AgentId {
    /// Canonical order: ML first, then the language-model domains.
    pub const ALL: [AgentId; 5] = [
        AgentId::Ml,
        AgentId::Environmental,
        AgentId::Infrastructural,
        AgentId::Spatial,
        AgentId::Temporal,
    ];

    pub const SLM: [AgentId; 4] = [
        AgentId::Environmental,
        AgentId::Infrastructural,
        AgentId::Spatial,
        AgentId::Temporal,
    ];

    pub fn is_slm(self) -> bool {
        self != AgentId::Ml
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentId::Ml => "ML",
            AgentId::Environmental => "Environmental",
            AgentId::Infrastructural => "Infrastructural",
            AgentId::Spatial => "Spatial",
            AgentId::Temporal => "Temporal",
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(AgentId::Ml),
            "environmental" | "env" => Ok(AgentId::Environmental),
            "infrastructural" | "infra" | "loc" => Ok(AgentId::Infrastructural),
            "spatial" | "spa" => Ok(AgentId::Spatial),
            "temporal" | "temp" => Ok(AgentId::Temporal),
            other => Err(format!("unknown agent `{other}`")),
        }
    }
}

/// Why an agent produced no usable output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Parse,
    Timeout,
    Transport,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::Parse => "parse",
            FailureKind::Timeout => "timeout",
            FailureKind::Transport => "transport",
        })
    }
}

/// The `(prediction, confidence, reasoning)` tuple returned by one agent,
/// plus bookkeeping for the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub agent: AgentId,
    pub prediction: Severity,
    pub confidence: f64,
    pub reasoning: String,
    pub raw_confidence: f64,
    pub latency_ms: u64,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    /// Set when the agent reported a confidence outside `[0, 1]`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub confidence_clamped: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AgentOutput {
    /// A successful output. Confidences are clamped into `[0, 1]` and the
    /// clamp is flagged.
    pub fn new(agent: AgentId, prediction: Severity, confidence: f64) -> Self {
        let (c, clamped) = clamp_unit(confidence);
        AgentOutput {
            agent,
            prediction,
            confidence: c,
            reasoning: String::new(),
            raw_confidence: c,
            latency_ms: 0,
            failed: false,
            failure: None,
            confidence_clamped: clamped,
            notes: Vec::new(),
        }
    }

    pub fn with_reasoning(mut self, reasoning: impl Into<String>) -> Self {
        if self.agent != AgentId::Ml {
            self.reasoning = reasoning.into();
        }
        self
    }

    /// Sets the pre-calibration confidence (clamped like `confidence`).
    pub fn with_raw_confidence(mut self, raw: f64) -> Self {
        let (c, clamped) = clamp_unit(raw);
        self.raw_confidence = c;
        self.confidence_clamped |= clamped;
        self
    }

    /// A failed output. The prediction field is a placeholder and must not be read.
    pub fn failed(agent: AgentId, kind: FailureKind) -> Self {
        AgentOutput {
            agent,
            prediction: Severity::ONE,
            confidence: 0.0,
            reasoning: String::new(),
            raw_confidence: 0.0,
            latency_ms: 0,
            failed: true,
            failure: Some(kind),
            confidence_clamped: false,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Clamps into `[0, 1]`; NaN maps to 0. Returns whether the value moved.
pub fn clamp_unit(x: f64) -> (f64, bool) {
    if x.is_nan() || x < 0.0 {
        (0.0, true)
    } else if x > 1.0 {
        (1.0, true)
    } else {
        (x, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_range() {
        for v in 1..=4 {
            assert!(Severity::new(v).is_ok());
        }
        for v in [-1, 0, 5, 100] {
            assert_eq!(Severity::new(v), Err(InvalidSeverity(v)));
        }
    }

    #[test]
    fn rarity() {
        let rare: Vec<u8> = Severity::ALL
            .iter()
            .filter(|s| s.is_rare())
            .map(|s| s.value())
            .collect();
        assert_eq!(rare, vec![1, 4]);
    }

    #[test]
    fn severity_serde_is_integer() {
        assert_eq!(serde_json::to_string(&Severity::THREE).unwrap(), "3");
        assert!(serde_json::from_str::<Severity>("7").is_err());
        assert_eq!("4.0".parse::<Severity>().unwrap(), Severity::FOUR);
    }

    #[test]
    fn slm_set_excludes_ml() {
        assert_eq!(AgentId::ALL.iter().filter(|a| a.is_slm()).count(), 4);
        assert_eq!(serde_json::to_string(&AgentId::Ml).unwrap(), "\"ML\"");
    }

    #[test]
    fn out_of_range_confidence_is_clamped_and_flagged() {
        let o = AgentOutput::new(AgentId::Spatial, Severity::TWO, 1.4);
        assert_eq!(o.confidence, 1.0);
        assert!(o.confidence_clamped);
        let o = AgentOutput::new(AgentId::Spatial, Severity::TWO, 0.4);
        assert!(!o.confidence_clamped);
    }

    #[test]
    fn ml_output_never_carries_reasoning() {
        let o = AgentOutput::new(AgentId::Ml, Severity::TWO, 0.4).with_reasoning("x");
        assert!(o.reasoning.is_empty());
    }
}
