//! Metrics, agent ablation and class-imbalance sweeps.

mod ablation;
mod imbalance;
mod metrics;
mod report;

pub use ablation::{run_ablation, AblationReport, BASELINE_KEY, COORDINATOR_KEY};
pub use imbalance::{
    default_scenarios, most_skewed, run_imbalance_suite, sample_imbalance, ImbalanceReport,
    ImbalanceScenario, ScenarioError, ScenarioResult,
};
pub use metrics::{compute_metrics, ClassMetrics, MetricsReport};
pub use report::{write_json, write_summary_csv, SummaryRow};

use crate::engine::{Engine, EngineError, Outcome};
use crate::features::AccidentRecord;
use crate::types::Severity;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("record `{0}` has no label")]
    Unlabeled(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

pub fn labels_of(records: &[AccidentRecord]) -> Result<Vec<Severity>, EvalError> {
    records
        .iter()
        .map(|r| r.label.ok_or_else(|| EvalError::Unlabeled(r.id.clone())))
        .collect()
}

/// Runs the engine over labeled records and scores the outcomes.
pub fn evaluate(engine: &Engine, records: &[AccidentRecord]) -> Result<(MetricsReport, Vec<Outcome>), EvalError> {
    let labels = labels_of(records)?;
    let outcomes: Vec<Outcome> = engine.run_records(records)?.into_iter().map(|(o, _)| o).collect();
    let preds: Vec<_> = outcomes.iter().map(Outcome::prediction).collect();
    Ok((compute_metrics(&preds, &labels)?, outcomes))
}
