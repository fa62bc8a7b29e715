//! Statistical agent backed by a smoothed class-conditional frequency
//! classifier (naive Bayes over discretized features).
//!
//! Numeric features are cut into quintile bins learned on the training set;
//! missing numerics are imputed with the training mean before binning.
//! Missing categoricals contribute nothing to the likelihood. All counts use
//! add-one smoothing, so unseen categories get a small non-zero likelihood.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::{AccidentRecord, FeatureMap, FeatureValue};
use crate::types::{AgentId, AgentOutput, Severity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainError {
    #[error("no training records")]
    Empty,
    #[error("record {0} has no label")]
    Unlabeled(String),
    #[error("class {0} unrepresented")]
    MissingClass(Severity),
}

/// Anything that yields a posterior over the four classes.
pub trait PosteriorModel: Send + Sync {
    fn posterior(&self, features: &FeatureMap) -> [f64; 4];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Column {
    Numeric {
        mean: f64,
        /// Ascending cut points; bin = number of cuts strictly below the value.
        cuts: Vec<f64>,
        /// counts[class][bin]
        counts: [Vec<u64>; 4],
    },
    Categorical {
        /// category → counts per class
        counts: BTreeMap<String, [u64; 4]>,
    },
}

/// Trained frequency model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlModel {
    class_counts: [u64; 4],
    total: u64,
    columns: BTreeMap<String, Column>,
}

const QUANTILES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

fn quantile_cuts(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    let mut cuts: Vec<f64> = QUANTILES
        .iter()
        .map(|q| {
            // nearest-rank on the sorted training values
            let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
            sorted[idx]
        })
        .collect();
    cuts.dedup();
    cuts
}

fn bin_of(cuts: &[f64], v: f64) -> usize {
    cuts.iter().filter(|&&c| c < v).count()
}

impl MlModel {
    pub fn train(records: &[AccidentRecord]) -> Result<Self, TrainError> {
        if records.is_empty() {
            return Err(TrainError::Empty);
        }
        let mut labels = Vec::with_capacity(records.len());
        for r in records {
            labels.push(r.label.ok_or_else(|| TrainError::Unlabeled(r.id.clone()))?);
        }
        let mut class_counts = [0u64; 4];
        for l in &labels {
            class_counts[l.index()] += 1;
        }
        if let Some(k) = Severity::ALL.into_iter().find(|k| class_counts[k.index()] == 0) {
            return Err(TrainError::MissingClass(k));
        }

        let mut names: Vec<&String> = records.iter().flat_map(|r| r.features.keys()).collect();
        names.sort();
        names.dedup();

        let mut columns = BTreeMap::new();
        for name in names {
            let values: Vec<(Severity, &FeatureValue)> = records
                .iter()
                .zip(&labels)
                .filter_map(|(r, l)| r.features.get(name).map(|v| (*l, v)))
                .filter(|(_, v)| !v.is_missing())
                .collect();
            if values.is_empty() {
                continue;
            }
            let all_numeric = values.iter().all(|(_, v)| v.as_f64().is_some());
            let column = if all_numeric {
                let mut nums: Vec<f64> = values.iter().filter_map(|(_, v)| v.as_f64()).collect();
                let mean = nums.iter().sum::<f64>() / nums.len() as f64;
                nums.sort_by(f64::total_cmp);
                let cuts = quantile_cuts(&nums);
                let bins = cuts.len() + 1;
                let mut counts: [Vec<u64>; 4] = std::array::from_fn(|_| vec![0; bins]);
                for (r, l) in records.iter().zip(&labels) {
                    let v = r
                        .features
                        .get(name)
                        .and_then(FeatureValue::as_f64)
                        .unwrap_or(mean);
                    counts[l.index()][bin_of(&cuts, v)] += 1;
                }
                Column::Numeric { mean, cuts, counts }
            } else {
                let mut counts: BTreeMap<String, [u64; 4]> = BTreeMap::new();
                for (l, v) in &values {
                    counts.entry(category_key(v)).or_default()[l.index()] += 1;
                }
                Column::Categorical { counts }
            };
            columns.insert(name.clone(), column);
        }
        Ok(MlModel {
            class_counts,
            total: records.len() as u64,
            columns,
        })
    }

    /// Smoothed log prior per class.
    fn log_prior(&self) -> [f64; 4] {
        std::array::from_fn(|k| {
            ((self.class_counts[k] + 1) as f64 / (self.total + 4) as f64).ln()
        })
    }

    /// Unnormalized log joint `log P(k) + Σ log P(x_f | k)`.
    pub fn log_joint(&self, features: &FeatureMap) -> [f64; 4] {
        let mut acc = self.log_prior();
        for (name, column) in &self.columns {
            let value = features.get(name).unwrap_or(&FeatureValue::Missing);
            match column {
                Column::Numeric { mean, cuts, counts } => {
                    let v = value.as_f64().unwrap_or(*mean);
                    let bin = bin_of(cuts, v);
                    let bins = cuts.len() + 1;
                    for (k, a) in acc.iter_mut().enumerate() {
                        let n_k: u64 = counts[k].iter().sum();
                        *a += ((counts[k][bin] + 1) as f64 / (n_k + bins as u64) as f64).ln();
                    }
                }
                Column::Categorical { counts } => {
                    if value.is_missing() {
                        continue;
                    }
                    let key = category_key(value);
                    let hit = counts.get(&key).copied().unwrap_or([0; 4]);
                    // one extra slot for categories never seen in training
                    let vocab = counts.len() as u64 + 1;
                    for (k, a) in acc.iter_mut().enumerate() {
                        let n_k: u64 = counts.values().map(|c| c[k]).sum();
                        *a += ((hit[k] + 1) as f64 / (n_k + vocab) as f64).ln();
                    }
                }
            }
        }
        acc
    }

    /// Mutual information between each feature (as discretized by the model)
    /// and the class, from the smoothed training counts. Sorted descending.
    pub fn feature_importance(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .columns
            .iter()
            .map(|(name, col)| {
                let table: Vec<[f64; 4]> = match col {
                    Column::Numeric { cuts, counts, .. } => (0..cuts.len() + 1)
                        .map(|b| std::array::from_fn(|k| (counts[k][b] + 1) as f64))
                        .collect(),
                    Column::Categorical { counts } => counts
                        .values()
                        .map(|c| std::array::from_fn(|k| (c[k] + 1) as f64))
                        .collect(),
                };
                (name.clone(), mutual_information(&table))
            })
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

fn category_key(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Categorical(s) => s.clone(),
        other => other.to_string(),
    }
}

fn mutual_information(table: &[[f64; 4]]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    let col: [f64; 4] = std::array::from_fn(|k| table.iter().map(|r| r[k]).sum::<f64>() / total);
    table
        .iter()
        .map(|row| {
            let pr = row.iter().sum::<f64>() / total;
            row.iter()
                .enumerate()
                .map(|(k, &c)| {
                    let p = c / total;
                    if p > 0.0 {
                        p * (p / (pr * col[k])).ln()
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
        })
        .sum()
}

impl PosteriorModel for MlModel {
    fn posterior(&self, features: &FeatureMap) -> [f64; 4] {
        softmax(self.log_joint(features))
    }
}

fn softmax(logits: [f64; 4]) -> [f64; 4] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - max).exp());
    let z: f64 = exps.iter().sum();
    exps.map(|e| e / z)
}

/// Maximum-posterior prediction. Ties go to the lower class index; the
/// confidence is the maximum probability itself, with no calibration.
pub fn output_from_posterior(p: [f64; 4]) -> AgentOutput {
    let mut best = 0;
    for k in 1..4 {
        if p[k] > p[best] {
            best = k;
        }
    }
    AgentOutput::new(
        AgentId::Ml,
        Severity::from_index(best).expect("index < 4"),
        p[best],
    )
}

pub fn ml_evaluate(model: &dyn PosteriorModel, features: &FeatureMap) -> AgentOutput {
    output_from_posterior(model.posterior(features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, label: u8, feats: &[(&str, FeatureValue)]) -> AccidentRecord {
        let mut r = AccidentRecord::new(id).labeled(Severity::new(label as i64).unwrap());
        for (n, v) in feats {
            r.features.insert(n.to_string(), v.clone());
        }
        r
    }

    #[test]
    fn argmax_and_tie_rule() {
        let o = output_from_posterior([0.1, 0.6, 0.2, 0.1]);
        assert_eq!((o.prediction, o.confidence), (Severity::TWO, 0.6));
        assert!(o.reasoning.is_empty());
        let o = output_from_posterior([0.25; 4]);
        assert_eq!((o.prediction, o.confidence), (Severity::ONE, 0.25));
        assert_eq!(o.raw_confidence, o.confidence);
    }

    #[test]
    fn separable_training_set_recovers_each_label() {
        let recs: Vec<_> = (1..=4u8)
            .map(|k| rec(&format!("r{k}"), k, &[("Road", FeatureValue::categorical(format!("c{k}")))]))
            .collect();
        let m = MlModel::train(&recs).unwrap();
        for r in &recs {
            let o = ml_evaluate(&m, &r.features);
            assert_eq!(Some(o.prediction), r.label);
        }
    }

    #[test]
    fn missing_class_rejected() {
        let recs: Vec<_> = (1..=3u8)
            .map(|k| rec(&format!("r{k}"), k, &[("a", FeatureValue::numeric(k as f64))]))
            .collect();
        let err = MlModel::train(&recs).unwrap_err();
        assert_eq!(err.to_string(), "class 4 unrepresented");
        assert_eq!(MlModel::train(&[]).unwrap_err(), TrainError::Empty);
    }

    #[test]
    fn posterior_matches_hand_computed_tables() {
        // class 1: a×3, b×1 ; classes 2-4: b×2 each
        let mut recs = vec![
            rec("1", 1, &[("W", FeatureValue::categorical("a"))]),
            rec("2", 1, &[("W", FeatureValue::categorical("a"))]),
            rec("3", 1, &[("W", FeatureValue::categorical("a"))]),
            rec("4", 1, &[("W", FeatureValue::categorical("b"))]),
        ];
        for k in 2..=4u8 {
            for j in 0..2 {
                recs.push(rec(&format!("{k}-{j}"), k, &[("W", FeatureValue::categorical("b"))]));
            }
        }
        let m = MlModel::train(&recs).unwrap();
        // priors (n_k+1)/(N+4) with N=10: 5/14, 3/14, 3/14, 3/14
        // P(a|k) = (c+1)/(n_k + |V| + 1), |V| = 2
        //   k=1: 4/7 ; k=2..4: 1/5
        let joint = [5.0 / 14.0 * 4.0 / 7.0, 3.0 / 14.0 / 5.0, 3.0 / 14.0 / 5.0, 3.0 / 14.0 / 5.0];
        let z: f64 = joint.iter().sum();
        let mut x = FeatureMap::new();
        x.insert("W".into(), FeatureValue::categorical("a"));
        let p = m.posterior(&x);
        for k in 0..4 {
            assert!((p[k] - joint[k] / z).abs() < 1e-12, "{k}: {} vs {}", p[k], joint[k] / z);
        }
        assert_eq!(output_from_posterior(p).prediction, Severity::ONE);
    }

    #[test]
    fn missing_numeric_uses_training_mean() {
        let recs: Vec<_> = (0..40)
            .map(|i| {
                let k = (i % 4) as u8 + 1;
                rec(&i.to_string(), k, &[("Speed", FeatureValue::numeric(k as f64 * 10.0 + (i / 4) as f64 * 0.1))])
            })
            .collect();
        let m = MlModel::train(&recs).unwrap();
        let mean = recs.iter().map(|r| r.features["Speed"].as_f64().unwrap()).sum::<f64>() / 40.0;
        let mut with_mean = FeatureMap::new();
        with_mean.insert("Speed".into(), FeatureValue::numeric(mean));
        let mut missing = FeatureMap::new();
        missing.insert("Speed".into(), FeatureValue::Missing);
        assert_eq!(m.posterior(&with_mean), m.posterior(&missing));
        assert_eq!(m.posterior(&with_mean), m.posterior(&FeatureMap::new()));
    }

    #[test]
    fn beats_chance_on_class_correlated_feature() {
        // Generator: class uniform; "Signal" equals the class with prob 0.6,
        // otherwise uniform over the other three. Exact Bayes rule predicts
        // the signal value, so the Bayes accuracy is 0.6.
        let bayes_accuracy = 0.6;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut gen = |n: usize| -> Vec<AccidentRecord> {
            (0..n)
                .map(|i| {
                    let k = (i % 4) as u8 + 1;
                    let s = if rng.random::<f64>() < 0.6 {
                        k
                    } else {
                        let others: Vec<u8> = (1..=4).filter(|&c| c != k).collect();
                        others[rng.random_range(0..3)]
                    };
                    let noise = rng.random_range(0..5u8);
                    rec(&i.to_string(), k, &[
                        ("Signal", FeatureValue::categorical(format!("s{s}"))),
                        ("Noise", FeatureValue::numeric(noise as f64)),
                    ])
                })
                .collect()
        };
        let train = gen(2000);
        let test = gen(2000);
        let m = MlModel::train(&train).unwrap();
        let correct = test
            .iter()
            .filter(|r| Some(ml_evaluate(&m, &r.features).prediction) == r.label)
            .count();
        let acc = correct as f64 / test.len() as f64;
        assert!(acc > 0.25, "accuracy {acc}");
        assert!((acc - bayes_accuracy).abs() < 0.05, "accuracy {acc}");
        let imp = m.feature_importance();
        assert_eq!(imp[0].0, "Signal");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn posterior_is_a_distribution(
                train in proptest::collection::vec((1u8..=4, 0u8..3, -5.0f64..5.0), 8..40),
                q in (0u8..4, proptest::option::of(-10.0f64..10.0)),
            ) {
                let mut recs: Vec<_> = (1..=4u8)
                    .map(|k| rec(&format!("seed{k}"), k, &[("c", FeatureValue::categorical("x"))]))
                    .collect();
                for (i, (k, c, v)) in train.iter().enumerate() {
                    recs.push(rec(&i.to_string(), *k, &[
                        ("c", FeatureValue::categorical(format!("v{c}"))),
                        ("n", FeatureValue::numeric(*v)),
                    ]));
                }
                let m = MlModel::train(&recs).unwrap();
                let mut x = FeatureMap::new();
                x.insert("c".into(), FeatureValue::categorical(format!("v{}", q.0)));
                x.insert("n".into(), q.1.map(FeatureValue::numeric).unwrap_or(FeatureValue::Missing));
                let p = m.posterior(&x);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(p.iter().all(|&v| v >= 0.0));
                let o = output_from_posterior(p);
                prop_assert_eq!(o.confidence, p.iter().copied().fold(0.0, f64::max));
            }
        }
    }
}
