use indexmap::IndexMap;
use serde::Serialize;

use crate::config::CoordinationMode;
use crate::engine::Engine;
use crate::features::AccidentRecord;

use super::{evaluate, EvalError, MetricsReport};

pub const BASELINE_KEY: &str = "none";
/// The variant that swaps the weighted coordinator for a plain head count.
pub const COORDINATOR_KEY: &str = "Coordinator";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    /// `"none"`, then one entry per configured agent, then `"Coordinator"`.
    pub reports: IndexMap<String, MetricsReport>,
    /// `(baseline − variant) / baseline` accuracy; the baseline is absent.
    pub relative_drop: IndexMap<String, f64>,
}

impl AblationReport {
    /// Excluded component with the steepest relative accuracy drop,
    /// restricted to agents.
    pub fn steepest_agent(&self) -> Option<(&str, f64)> {
        self.relative_drop
            .iter()
            .filter(|(k, _)| k.as_str() != COORDINATOR_KEY)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.as_str(), *v))
    }
}

/// Evaluates the full engine, each single-agent exclusion and the
/// majority-vote coordinator on the same records.
pub fn run_ablation(engine: &Engine, records: &[AccidentRecord]) -> Result<AblationReport, EvalError> {
    let mut reports = IndexMap::new();
    let (base, _) = evaluate(engine, records)?;
    reports.insert(BASELINE_KEY.to_string(), base);
    for id in engine.agent_ids() {
        let variant = engine.without_agent(id).expect("agent is configured and not alone");
        reports.insert(id.name().to_string(), evaluate(&variant, records)?.0);
    }
    let majority = engine.with_mode(CoordinationMode::MajorityVote);
    reports.insert(COORDINATOR_KEY.to_string(), evaluate(&majority, records)?.0);

    let base_acc = reports[BASELINE_KEY].accuracy;
    let relative_drop = reports
        .iter()
        .skip(1)
        .map(|(k, m)| {
            let drop = if base_acc == 0.0 { 0.0 } else { (base_acc - m.accuracy) / base_acc };
            (k.clone(), drop)
        })
        .collect();
    Ok(AblationReport {
        reports,
        relative_drop,
    })
}
