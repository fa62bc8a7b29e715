//! Final choice between the ML agent's own output and the coordinated one.
//!
//! The first satisfied rule wins:
//!
//! 1. the ML override condition held → ML
//! 2. `C_coord > tau_coord(ŷ_coord)` → coordinator
//! 3. `c_ML · w1(ŷ_ML) > C_coord · (1 − w1(ŷ_ML))` → ML
//! 4. coordinator
//!
//! Without a live ML output only rules 2 and 4 can fire. The reported
//! confidence is always that of the selected source.

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::coordination::CoordinationResult;
use crate::types::{AgentOutput, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSource {
    #[serde(rename = "ML")]
    Ml,
    Coordinator,
}

impl std::fmt::Display for DecisionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecisionSource::Ml => "ML",
            DecisionSource::Coordinator => "Coordinator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub prediction: Severity,
    pub confidence: f64,
    pub source: DecisionSource,
    pub rule_fired: u8,
}

pub fn final_decide(
    ml: Option<&AgentOutput>,
    coord: &CoordinationResult,
    override_met: bool,
    cfg: &EngineConfig,
) -> FinalDecision {
    let ml = ml.filter(|o| !o.failed);
    let from_ml = |o: &AgentOutput, rule| FinalDecision {
        prediction: o.prediction,
        confidence: o.confidence,
        source: DecisionSource::Ml,
        rule_fired: rule,
    };
    let from_coord = |rule| FinalDecision {
        prediction: coord.prediction,
        confidence: coord.confidence,
        source: DecisionSource::Coordinator,
        rule_fired: rule,
    };
    if let (true, Some(o)) = (override_met, ml) {
        return from_ml(o, 1);
    }
    if coord.confidence > cfg.tau_coord(coord.prediction) {
        return from_coord(2);
    }
    if let Some(o) = ml {
        let w1 = cfg.w1(o.prediction);
        if o.confidence * w1 > coord.confidence * (1.0 - w1) {
            return from_ml(o, 3);
        }
    }
    from_coord(4)
}
