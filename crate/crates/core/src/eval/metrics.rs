use serde::Serialize;

use crate::coordination::PerClass;
use crate::types::Severity;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Classification metrics over decided records. Precision, recall and F1
/// are macro averages over all four classes; `accuracy` is computed over
/// the confusion matrix, so abstentions neither help nor hurt it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: PerClass<ClassMetrics>,
    /// `confusion[true][predicted]`, zero-based class indices.
    pub confusion: [[u64; 4]; 4],
    pub abstentions: u64,
    pub total: u64,
}

pub fn compute_metrics(
    predictions: &[Option<Severity>],
    labels: &[Severity],
) -> Result<MetricsReport, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut confusion = [[0u64; 4]; 4];
    let mut abstentions = 0;
    for (p, y) in predictions.iter().zip(labels) {
        match p {
            Some(p) => confusion[y.index()][p.index()] += 1,
            None => abstentions += 1,
        }
    }
    let decided: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..4).map(|k| confusion[k][k]).sum();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut per_class = PerClass([ClassMetrics::default(); 4]);
    for (k, row) in confusion.iter().enumerate() {
        let tp = row[k];
        let support: u64 = row.iter().sum();
        let predicted: u64 = (0..4).map(|t| confusion[t][k]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.0[k] = ClassMetrics {
            precision,
            recall,
            f1,
            support,
        };
    }
    let macro_avg = |f: fn(&ClassMetrics) -> f64| per_class.0.iter().map(f).sum::<f64>() / 4.0;
    Ok(MetricsReport {
        accuracy: ratio(correct, decided),
        precision: macro_avg(|m| m.precision),
        recall: macro_avg(|m| m.recall),
        f1: macro_avg(|m| m.f1),
        per_class,
        confusion,
        abstentions,
        total: labels.len() as u64,
    })
}
