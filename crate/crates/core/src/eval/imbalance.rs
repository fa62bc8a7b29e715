use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::CoordinationMode;
use crate::engine::{Engine, Outcome};
use crate::features::AccidentRecord;
use crate::types::Severity;

use super::{compute_metrics, labels_of, EvalError, MetricsReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario `{name}`: {message}")]
    Invalid { name: String, message: String },
    #[error("scenario `{name}` needs class {class} but the source has none")]
    MissingClass { name: String, class: Severity },
    #[error("reading scenarios: {0}")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceScenario {
    pub name: String,
    /// Target share of each class. Classes left out get zero.
    pub distribution: BTreeMap<Severity, f64>,
}

impl ImbalanceScenario {
    pub fn new(name: impl Into<String>, p: [f64; 4]) -> Self {
        ImbalanceScenario {
            name: name.into(),
            distribution: Severity::ALL.into_iter().zip(p).collect(),
        }
    }

    pub fn proportion(&self, class: Severity) -> f64 {
        self.distribution.get(&class).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |message: String| ScenarioError::Invalid {
            name: self.name.clone(),
            message,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        for (k, p) in &self.distribution {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(invalid(format!("class {k} has proportion {p}")));
            }
        }
        let sum: f64 = self.distribution.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("proportions sum to {sum}")));
        }
        Ok(())
    }

    /// Shannon entropy in nats; lower means more skewed.
    pub fn entropy(&self) -> f64 {
        self.distribution
            .values()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    }

    /// Per-class counts for `size` records, largest-remainder rounded so
    /// they sum to `size` and each is within one of its exact target.
    pub fn counts(&self, size: usize) -> [usize; 4] {
        let exact: Vec<f64> = Severity::ALL.iter().map(|&k| self.proportion(k) * size as f64).collect();
        let mut counts: [usize; 4] = std::array::from_fn(|i| exact[i].floor() as usize);
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = size.saturating_sub(counts.iter().sum());
        for &i in order.iter().filter(|&&i| self.proportion(Severity::ALL[i]) > 0.0).cycle().take(short) {
            counts[i] += 1;
        }
        counts
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<Self>, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Load(e.to_string()))?;
        let list: Vec<Self> = serde_json::from_str(&text).map_err(|e| ScenarioError::Load(e.to_string()))?;
        for s in &list {
            s.validate()?;
        }
        Ok(list)
    }
}

/// Six label distributions from balanced to strongly skewed. The numbers
/// are approximations and meant to be overridden.
pub fn default_scenarios() -> Vec<ImbalanceScenario> {
    vec![
        ImbalanceScenario::new("uniform", [0.25, 0.25, 0.25, 0.25]),
        ImbalanceScenario::new("mild_common_skew", [0.15, 0.35, 0.35, 0.15]),
        ImbalanceScenario::new("heavy_common_skew", [0.03, 0.47, 0.47, 0.03]),
        ImbalanceScenario::new("rare_fatal", [0.10, 0.50, 0.35, 0.05]),
        ImbalanceScenario::new("minor_fatal_bimodal", [0.45, 0.05, 0.05, 0.45]),
        ImbalanceScenario::new("skew_to_fatal", [0.05, 0.15, 0.20, 0.60]),
    ]
}

/// The scenario with the lowest entropy; the first one wins ties.
pub fn most_skewed(scenarios: &[ImbalanceScenario]) -> Option<&ImbalanceScenario> {
    scenarios
        .iter()
        .reduce(|best, s| if s.entropy() < best.entropy() { s } else { best })
}

/// Draws `size` labeled records matching the scenario's distribution.
/// Each class is sampled without replacement when the source has enough
/// records and with replacement otherwise. The result is shuffled.
pub fn sample_imbalance(
    records: &[AccidentRecord],
    scenario: &ImbalanceScenario,
    size: usize,
    seed: u64,
) -> Result<Vec<AccidentRecord>, EvalError> {
    scenario.validate()?;
    let labels = labels_of(records)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = scenario.counts(size);
    let mut out = Vec::with_capacity(size);
    for (k, &want) in Severity::ALL.iter().zip(&counts) {
        if want == 0 {
            continue;
        }
        let pool: Vec<&AccidentRecord> = records
            .iter()
            .zip(&labels)
            .filter(|(_, y)| *y == k)
            .map(|(r, _)| r)
            .collect();
        if pool.is_empty() {
            return Err(ScenarioError::MissingClass {
                name: scenario.name.clone(),
                class: *k,
            }
            .into());
        }
        if want <= pool.len() {
            out.extend(index::sample(&mut rng, pool.len(), want).into_iter().map(|i| pool[i].clone()));
        } else {
            out.extend((0..want).map(|_| pool[rng.random_range(0..pool.len())].clone()));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub size: usize,
    pub rule_based: MetricsReport,
    pub llm_based: MetricsReport,
    /// Share of records where the LLM coordinator fell back to rules.
    pub llm_fallback_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceReport {
    pub seed: u64,
    pub scenarios: IndexMap<String, ScenarioResult>,
}

impl ImbalanceReport {
    /// Macro-F1 lost between two scenarios, for each coordination mode:
    /// `(rule_based, llm_based)`.
    pub fn f1_degradation(&self, from: &str, to: &str) -> Option<(f64, f64)> {
        let a = self.scenarios.get(from)?;
        let b = self.scenarios.get(to)?;
        Some((a.rule_based.f1 - b.rule_based.f1, a.llm_based.f1 - b.llm_based.f1))
    }
}

/// Resamples `records` once per scenario and runs both coordination modes
/// on the identical sample. Scenario `i` draws from stream `seed + i`.
pub fn run_imbalance_suite(
    engine: &Engine,
    records: &[AccidentRecord],
    scenarios: &[ImbalanceScenario],
    size: usize,
    seed: u64,
) -> Result<ImbalanceReport, EvalError> {
    for s in scenarios {
        s.validate()?;
    }
    let rb = engine.with_mode(CoordinationMode::RuleBased);
    let llm = engine.with_mode(CoordinationMode::LlmBased);
    let mut out = IndexMap::new();
    for (i, s) in scenarios.iter().enumerate() {
        let sample = sample_imbalance(records, s, size, seed.wrapping_add(i as u64))?;
        let labels = labels_of(&sample)?;
        let rb_preds: Vec<_> = rb.run_records(&sample)?.iter().map(|(o, _)| o.prediction()).collect();
        let llm_runs = llm.run_records(&sample)?;
        let fallbacks = llm_runs
            .iter()
            .filter(|(_, t)| t.coordination.as_ref().is_some_and(|c| c.llm_fallback.is_some()))
            .count();
        let decided = llm_runs.iter().filter(|(o, _)| *o != Outcome::Abstained).count();
        let llm_preds: Vec<_> = llm_runs.iter().map(|(o, _)| o.prediction()).collect();
        out.insert(
            s.name.clone(),
            ScenarioResult {
                size: sample.len(),
                rule_based: compute_metrics(&rb_preds, &labels)?,
                llm_based: compute_metrics(&llm_preds, &labels)?,
                llm_fallback_rate: if decided == 0 { 0.0 } else { fallbacks as f64 / decided as f64 },
            },
        );
    }
    Ok(ImbalanceReport {
        seed,
        scenarios: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(per_class: usize) -> Vec<AccidentRecord> {
        (0..per_class * 4)
            .map(|i| AccidentRecord::new(format!("r{i}")).labeled(Severity::from_index(i % 4).unwrap()))
            .collect()
    }

    fn class_counts(rs: &[AccidentRecord]) -> [usize; 4] {
        let mut c = [0; 4];
        for r in rs {
            c[r.label.unwrap().index()] += 1;
        }
        c
    }

    #[test]
    fn uniform_400() {
        let s = sample_imbalance(&pool(50), &default_scenarios()[0], 400, 1).unwrap();
        assert_eq!(class_counts(&s), [100; 4]);
    }

    #[test]
    fn rare_fatal_200() {
        let sc = default_scenarios().into_iter().find(|s| s.name == "rare_fatal").unwrap();
        let s = sample_imbalance(&pool(200), &sc, 200, 1).unwrap();
        assert_eq!(class_counts(&s)[3], 10);
    }

    #[test]
    fn missing_class_is_an_error() {
        let src: Vec<_> = pool(10).into_iter().filter(|r| r.label != Some(Severity::ONE)).collect();
        let err = sample_imbalance(&src, &default_scenarios()[0], 40, 1).unwrap_err();
        assert!(matches!(err, EvalError::Scenario(ScenarioError::MissingClass { class: Severity::ONE, .. })));
    }

    #[test]
    fn zero_share_class_may_be_absent() {
        let src: Vec<_> = pool(10).into_iter().filter(|r| r.label != Some(Severity::ONE)).collect();
        let sc = ImbalanceScenario::new("no_ones", [0.0, 0.5, 0.25, 0.25]);
        assert_eq!(class_counts(&sample_imbalance(&src, &sc, 8, 3).unwrap()), [0, 4, 2, 2]);
    }

    #[test]
    fn same_seed_same_sample() {
        let sc = &default_scenarios()[3];
        let a = sample_imbalance(&pool(30), sc, 97, 9).unwrap();
        let b = sample_imbalance(&pool(30), sc, 97, 9).unwrap();
        let c = sample_imbalance(&pool(30), sc, 97, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(ImbalanceScenario::new("x", [0.5, 0.5, 0.5, 0.0]).validate().is_err());
        assert!(ImbalanceScenario::new("x", [1.5, -0.5, 0.0, 0.0]).validate().is_err());
        assert!(ImbalanceScenario::new("", [0.25; 4]).validate().is_err());
    }

    #[test]
    fn heavy_common_skew_is_most_skewed_default() {
        assert_eq!(most_skewed(&default_scenarios()).unwrap().name, "heavy_common_skew");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_within_one_of_target(size in 0usize..5000, which in 0usize..6) {
                let s = &default_scenarios()[which];
                let c = s.counts(size);
                prop_assert_eq!(c.iter().sum::<usize>(), size);
                for (k, n) in Severity::ALL.iter().zip(c) {
                    prop_assert!((n as f64 - s.proportion(*k) * size as f64).abs() <= 1.0);
                }
            }
        }
    }
}
