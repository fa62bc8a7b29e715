use std::path::Path;

use serde::Serialize;

use super::{AblationReport, ImbalanceReport, MetricsReport};

/// One line of the flat CSV summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub variant: String,
    pub mode: String,
    pub n: u64,
    pub abstentions: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SummaryRow {
    pub fn new(run: &str, variant: &str, mode: &str, m: &MetricsReport) -> Self {
        SummaryRow {
            run: run.into(),
            variant: variant.into(),
            mode: mode.into(),
            n: m.total,
            abstentions: m.abstentions,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

impl AblationReport {
    pub fn summary_rows(&self, mode: &str) -> Vec<SummaryRow> {
        self.reports
            .iter()
            .map(|(k, m)| SummaryRow::new("ablation", k, mode, m))
            .collect()
    }
}

impl ImbalanceReport {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.scenarios
            .iter()
            .flat_map(|(name, r)| {
                [
                    SummaryRow::new("imbalance", name, "rule_based", &r.rule_based),
                    SummaryRow::new("imbalance", name, "llm_based", &r.llm_based),
                ]
            })
            .collect()
    }
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(std::io::Error::other)?;
    }
    w.flush()
}
