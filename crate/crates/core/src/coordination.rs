//! Fusion of agent outputs into one coordinated `(prediction, confidence)`.
//!
//! The rule-based coordinator is a class-weighted vote with an ML override:
//!
//! * score of class k: `Σ w_a · c_a · β_k` over agents predicting k
//! * the ML agent overrides the vote when `c_ML ≥ tau_ml_corrob`, or when
//!   `c_ML ≥ tau_ml_high` and at least one language-model agent agrees
//! * ties (within `tie_epsilon`) go to the class with the fewest
//!   supporters, then to rare classes, then to the lower index
//! * confidence is the weight-averaged confidence of the supporters plus
//!   an agreement boost, capped
//!
//! Outputs flagged `failed` never vote. The agreement ratio divides by the
//! number of language-model agents present in the input, failed or not.

use std::fmt::Write as _;
use std::ops::{Index, IndexMut};
use std::time::{Duration, Instant};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::agents::backend::SlmBackend;
use crate::agents::parse::parse_response;
use crate::agents::prompt::SEVERITY_SCALE;
use crate::config::{CoordinationMode, EngineConfig};
use crate::types::{AgentId, AgentOutput, FailureKind, Severity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CoordinationError {
    #[error("no successful agent outputs to coordinate")]
    EmptyInput,
    #[error("agent {0} appears more than once")]
    DuplicateAgent(AgentId),
}

/// One value per severity class. Serializes as a `{"1": .., "4": ..}` map.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerClass<T>(pub [T; 4]);

impl<T> Index<Severity> for PerClass<T> {
    type Output = T;
    fn index(&self, k: Severity) -> &T {
        &self.0[k.index()]
    }
}

impl<T> IndexMut<Severity> for PerClass<T> {
    fn index_mut(&mut self, k: Severity) -> &mut T {
        &mut self.0[k.index()]
    }
}

impl<T: Serialize> Serialize for PerClass<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(4))?;
        for k in Severity::ALL {
            m.serialize_entry(&k.value().to_string(), &self[k])?;
        }
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteBreakdown {
    pub scores: PerClass<f64>,
    pub supporters: PerClass<Vec<AgentId>>,
    pub slm_supporters: PerClass<Vec<AgentId>>,
    /// Language-model agents present in the input, failed ones included.
    pub slm_pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinationResult {
    pub prediction: Severity,
    pub confidence: f64,
    pub method: CoordinationMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<VoteBreakdown>,
    pub override_applied: bool,
    pub boost_applied: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub reasoning: String,
    /// Set when LLM coordination failed and the rule-based result stands in.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm_fallback: Option<FailureKind>,
}

fn live(outputs: &[AgentOutput]) -> Result<Vec<&AgentOutput>, CoordinationError> {
    let mut seen = [false; 5];
    for o in outputs {
        let i = o.agent as usize;
        if seen[i] {
            return Err(CoordinationError::DuplicateAgent(o.agent));
        }
        seen[i] = true;
    }
    let mut out: Vec<&AgentOutput> = outputs.iter().filter(|o| !o.failed).collect();
    if out.is_empty() {
        return Err(CoordinationError::EmptyInput);
    }
    out.sort_by_key(|o| o.agent);
    Ok(out)
}

pub fn weighted_scores(
    outputs: &[AgentOutput],
    cfg: &EngineConfig,
) -> Result<VoteBreakdown, CoordinationError> {
    let voters = live(outputs)?;
    let mut scores = PerClass([0.0; 4]);
    let mut supporters: PerClass<Vec<AgentId>> = PerClass::default();
    let mut slm_supporters: PerClass<Vec<AgentId>> = PerClass::default();
    for o in voters {
        let k = o.prediction;
        scores[k] += cfg.weight(o.agent) * o.confidence * cfg.class_factor(k);
        supporters[k].push(o.agent);
        if o.agent.is_slm() {
            slm_supporters[k].push(o.agent);
        }
    }
    let slm_pool = outputs.iter().filter(|o| o.agent.is_slm()).count();
    Ok(VoteBreakdown {
        scores,
        supporters,
        slm_supporters,
        slm_pool,
    })
}

pub fn check_ml_override(outputs: &[AgentOutput], cfg: &EngineConfig) -> bool {
    let Some(ml) = outputs.iter().find(|o| o.agent == AgentId::Ml && !o.failed) else {
        return false;
    };
    if ml.confidence >= cfg.tau_ml_corrob {
        return true;
    }
    ml.confidence >= cfg.tau_ml_high
        && outputs
            .iter()
            .any(|o| o.agent.is_slm() && !o.failed && o.prediction == ml.prediction)
}

/// Argmax of the vote scores with the tie rules described at module level.
pub fn rb_predict(breakdown: &VoteBreakdown, cfg: &EngineConfig) -> Severity {
    let max = breakdown.scores.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied = Severity::ALL
        .into_iter()
        .filter(|&k| max - breakdown.scores[k] <= cfg.tie_epsilon);
    tied.min_by_key(|&k| (breakdown.supporters[k].len(), !k.is_rare(), k.value()))
        .expect("at least one class attains the maximum")
}

pub fn agreement_boost(prediction: Severity, breakdown: &VoteBreakdown, cfg: &EngineConfig) -> f64 {
    if breakdown.slm_pool == 0 {
        return 0.0;
    }
    let agreeing = breakdown.slm_supporters[prediction].len();
    let ratio = agreeing as f64 / breakdown.slm_pool as f64;
    if ratio <= cfg.boost_ratio_gate {
        return 0.0;
    }
    if prediction.is_rare() {
        if agreeing >= cfg.boost_min_rare_supporters {
            cfg.boost_rare
        } else {
            0.0
        }
    } else {
        cfg.boost_common
    }
}

/// `Σ w_a c_a / Σ w_a` over every agent predicting `prediction`, or the
/// configured fallback when nobody does.
pub fn weighted_avg_confidence(
    prediction: Severity,
    outputs: &[AgentOutput],
    cfg: &EngineConfig,
) -> f64 {
    let (num, den) = outputs
        .iter()
        .filter(|o| !o.failed && o.prediction == prediction)
        .fold((0.0, 0.0), |(n, d), o| {
            let w = cfg.weight(o.agent);
            (n + w * o.confidence, d + w)
        });
    if den == 0.0 {
        cfg.fallback_confidence
    } else {
        num / den
    }
}

pub fn coordinate_rb(
    outputs: &[AgentOutput],
    cfg: &EngineConfig,
) -> Result<CoordinationResult, CoordinationError> {
    let breakdown = weighted_scores(outputs, cfg)?;
    if check_ml_override(outputs, cfg) {
        let ml = outputs
            .iter()
            .find(|o| o.agent == AgentId::Ml && !o.failed)
            .expect("override implies a live ML output");
        let confidence = if ml.prediction.is_rare() {
            cfg.confidence_cap.min(ml.confidence + cfg.override_rare_bonus)
        } else {
            cfg.confidence_cap.min(ml.confidence)
        };
        return Ok(CoordinationResult {
            prediction: ml.prediction,
            confidence,
            method: CoordinationMode::RuleBased,
            breakdown: Some(breakdown),
            override_applied: true,
            boost_applied: 0.0,
            reasoning: String::new(),
            llm_fallback: None,
        });
    }
    let prediction = rb_predict(&breakdown, cfg);
    let boost = agreement_boost(prediction, &breakdown, cfg);
    let confidence = cfg
        .confidence_cap
        .min(weighted_avg_confidence(prediction, outputs, cfg) + boost);
    Ok(CoordinationResult {
        prediction,
        confidence,
        method: CoordinationMode::RuleBased,
        breakdown: Some(breakdown),
        override_applied: false,
        boost_applied: boost,
        reasoning: String::new(),
        llm_fallback: None,
    })
}

/// Unweighted plurality vote: the coordinator-degradation baseline. Ties go
/// to the larger summed confidence, then the lower class index.
pub fn coordinate_majority(
    outputs: &[AgentOutput],
    cfg: &EngineConfig,
) -> Result<CoordinationResult, CoordinationError> {
    let voters = live(outputs)?;
    let mut count = [0usize; 4];
    let mut conf = [0.0f64; 4];
    for o in &voters {
        count[o.prediction.index()] += 1;
        conf[o.prediction.index()] += o.confidence;
    }
    let mut best = 0;
    for k in 1..4 {
        if count[k] > count[best] || (count[k] == count[best] && conf[k] > conf[best]) {
            best = k;
        }
    }
    Ok(CoordinationResult {
        prediction: Severity::from_index(best).expect("index < 4"),
        confidence: cfg.confidence_cap.min(conf[best] / count[best] as f64),
        method: CoordinationMode::MajorityVote,
        breakdown: None,
        override_applied: false,
        boost_applied: 0.0,
        reasoning: String::new(),
        llm_fallback: None,
    })
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

/// Meta-prompt for the LLM coordinator: one block per successful agent in
/// canonical order (ML, Environmental, Infrastructural, Spatial, Temporal),
/// then a staged decision instruction and the JSON reply format.
pub fn format_meta_prompt(outputs: &[AgentOutput], cfg: &EngineConfig) -> String {
    let mut voters: Vec<&AgentOutput> = outputs.iter().filter(|o| !o.failed).collect();
    voters.sort_by_key(|o| o.agent);
    let mut out = String::from(
        "You coordinate a team of traffic accident severity analysts. Each analyst studied one part of the evidence and reported a severity class, a confidence and its reasoning. Higher weights mark analysts that have been more reliable.\n",
    );
    out.push_str(SEVERITY_SCALE);
    out.push_str("\n\nAnalyst reports:\n");
    for o in voters {
        let reasoning = if o.reasoning.trim().is_empty() {
            "(none)"
        } else {
            o.reasoning.trim()
        };
        let _ = write!(
            out,
            "\n[{}]\nseverity: {}\nconfidence: {}\nweight: {}\nreasoning: {}\n",
            o.agent,
            o.prediction,
            fmt_num(o.confidence),
            fmt_num(cfg.weight(o.agent)),
            reasoning
        );
    }
    out.push_str(
        "\nDecide in stages. First list the classes the analysts agree on. Then settle each disagreement, starting with the highest-weighted analysts. Finally choose one class, keeping in mind that slight (1) and fatal (4) accidents are rare and easy to miss.\n",
    );
    out.push_str(
        "Reply with one JSON object and nothing after it:\n{\"severity\": <integer 1-4>, \"confidence\": <number between 0 and 1>, \"reasoning\": \"<short summary>\"}",
    );
    out
}

/// LLM-based coordination. Any transport, timeout or parse failure falls
/// back to the rule-based result, tagged with the failure.
pub fn coordinate_llm(
    outputs: &[AgentOutput],
    backend: &dyn SlmBackend,
    cfg: &EngineConfig,
) -> Result<CoordinationResult, CoordinationError> {
    live(outputs)?;
    let prompt = format_meta_prompt(outputs, cfg);
    let timeout = Duration::from_millis(cfg.agent_timeout_ms);
    let started = Instant::now();
    let reply = backend.complete(&prompt, &cfg.decoding, timeout);
    let failure = match reply {
        Ok(_) if started.elapsed() > timeout => FailureKind::Timeout,
        Ok(c) => match parse_response(&c.text) {
            Ok(p) => {
                return Ok(CoordinationResult {
                    prediction: p.severity,
                    confidence: p.confidence,
                    method: CoordinationMode::LlmBased,
                    breakdown: None,
                    override_applied: false,
                    boost_applied: 0.0,
                    reasoning: p.reasoning,
                    llm_fallback: None,
                })
            }
            Err(_) => FailureKind::Parse,
        },
        Err(e) => e.kind(),
    };
    let mut rb = coordinate_rb(outputs, cfg)?;
    rb.llm_fallback = Some(failure);
    Ok(rb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::backend::{BackendError, ScriptedBackend};

    fn out(agent: AgentId, k: u8, c: f64) -> AgentOutput {
        AgentOutput::new(agent, Severity::new(k as i64).unwrap(), c)
    }

    fn five(ml: (u8, f64), env: (u8, f64), infra: (u8, f64), spa: (u8, f64), temp: (u8, f64)) -> Vec<AgentOutput> {
        vec![
            out(AgentId::Ml, ml.0, ml.1),
            out(AgentId::Environmental, env.0, env.1),
            out(AgentId::Infrastructural, infra.0, infra.1),
            out(AgentId::Spatial, spa.0, spa.1),
            out(AgentId::Temporal, temp.0, temp.1),
        ]
    }

    fn example() -> Vec<AgentOutput> {
        five((2, 0.8), (4, 0.9), (4, 0.7), (2, 0.6), (3, 0.5))
    }

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    #[test]
    fn five_agent_scores() {
        let b = weighted_scores(&example(), &cfg()).unwrap();
        // S2 = 3.0·0.8 + 1.0·0.6 ; S4 = (1.5·0.9 + 1.2·0.7)·1.2 ; S3 = 1.0·0.5
        assert!((b.scores[Severity::TWO] - 3.0).abs() < 1e-12);
        assert!((b.scores[Severity::FOUR] - 2.628).abs() < 1e-12);
        assert!((b.scores[Severity::THREE] - 0.5).abs() < 1e-12);
        assert_eq!(b.scores[Severity::ONE], 0.0);
        assert_eq!(b.supporters[Severity::FOUR], [AgentId::Environmental, AgentId::Infrastructural]);
        assert_eq!(b.slm_supporters[Severity::TWO], [AgentId::Spatial]);
        assert_eq!(b.slm_pool, 4);
        assert_eq!(rb_predict(&b, &cfg()), Severity::TWO);
    }

    #[test]
    fn single_agent_score() {
        let b = weighted_scores(&[out(AgentId::Environmental, 1, 1.0)], &cfg()).unwrap();
        assert!((b.scores[Severity::ONE] - 1.8).abs() < 1e-12);
        assert_eq!(&b.scores.0[1..], &[0.0; 3]);
    }

    #[test]
    fn zero_confidence_zero_scores() {
        let b = weighted_scores(&five((1, 0.0), (2, 0.0), (3, 0.0), (4, 0.0), (1, 0.0)), &cfg()).unwrap();
        assert_eq!(b.scores.0, [0.0; 4]);
    }

    #[test]
    fn empty_and_all_failed_inputs() {
        assert_eq!(weighted_scores(&[], &cfg()), Err(CoordinationError::EmptyInput));
        let failed = vec![AgentOutput::failed(AgentId::Spatial, FailureKind::Parse)];
        assert_eq!(coordinate_rb(&failed, &cfg()), Err(CoordinationError::EmptyInput));
    }

    #[test]
    fn duplicates_rejected() {
        let d = vec![out(AgentId::Spatial, 1, 0.5), out(AgentId::Spatial, 2, 0.5)];
        assert_eq!(weighted_scores(&d, &cfg()), Err(CoordinationError::DuplicateAgent(AgentId::Spatial)));
    }

    #[test]
    fn override_conditions() {
        // branch a: confident ML, no corroboration
        let o = five((2, 0.82), (4, 0.5), (4, 0.5), (3, 0.5), (3, 0.5));
        assert!(check_ml_override(&o, &cfg()));
        // branch b: one SLM agrees
        let o = five((2, 0.76), (2, 0.5), (4, 0.5), (3, 0.5), (3, 0.5));
        assert!(check_ml_override(&o, &cfg()));
        let o = five((2, 0.76), (4, 0.5), (4, 0.5), (3, 0.5), (3, 0.5));
        assert!(!check_ml_override(&o, &cfg()));
        // failed ML never overrides
        let mut o = five((2, 0.99), (2, 0.5), (4, 0.5), (3, 0.5), (3, 0.5));
        o[0] = AgentOutput::failed(AgentId::Ml, FailureKind::Timeout);
        assert!(!check_ml_override(&o, &cfg()));
    }

    fn breakdown_with(scores: [f64; 4], support: [usize; 4]) -> VoteBreakdown {
        let mut supporters: PerClass<Vec<AgentId>> = PerClass::default();
        let mut pool = AgentId::ALL.iter().copied();
        for (k, &n) in support.iter().enumerate() {
            supporters.0[k] = (0..n).map(|_| pool.next().unwrap()).collect();
        }
        VoteBreakdown {
            scores: PerClass(scores),
            slm_supporters: supporters.clone(),
            supporters,
            slm_pool: 4,
        }
    }

    #[test]
    fn tie_prefers_fewest_supporters() {
        let b = breakdown_with([2.0, 0.0, 2.0, 0.0], [1, 0, 2, 0]);
        assert_eq!(rb_predict(&b, &cfg()), Severity::ONE);
    }

    #[test]
    fn residual_tie_prefers_lower_common_class() {
        let b = breakdown_with([0.0, 1.5, 1.5, 0.0], [0, 1, 1, 0]);
        // classes 1 and 4 score 0 so they are not tied at the maximum
        assert_eq!(rb_predict(&b, &cfg()), Severity::TWO);
    }

    #[test]
    fn residual_tie_prefers_rare_class() {
        let b = breakdown_with([0.0, 1.5, 0.0, 1.5], [0, 1, 0, 1]);
        assert_eq!(rb_predict(&b, &cfg()), Severity::FOUR);
    }

    #[test]
    fn near_ties_within_epsilon() {
        let b = breakdown_with([1.0 + 1e-12, 1.0, 0.0, 0.0], [2, 1, 0, 0]);
        assert_eq!(rb_predict(&b, &cfg()), Severity::TWO);
    }

    fn slm_agree(pred: u8, n: usize) -> Vec<AgentOutput> {
        AgentId::SLM
            .iter()
            .enumerate()
            .map(|(i, &a)| out(a, if i < n { pred } else { if pred == 3 { 2 } else { 3 } }, 0.6))
            .collect()
    }

    #[test]
    fn boost_branches() {
        let c = cfg();
        let b = weighted_scores(&slm_agree(4, 3), &c).unwrap();
        assert_eq!(agreement_boost(Severity::FOUR, &b, &c), 0.1);
        let b = weighted_scores(&slm_agree(2, 3), &c).unwrap();
        assert_eq!(agreement_boost(Severity::TWO, &b, &c), 0.05);
        let b = weighted_scores(&slm_agree(4, 2), &c).unwrap();
        assert_eq!(agreement_boost(Severity::FOUR, &b, &c), 0.0);
    }

    #[test]
    fn boost_denominator_counts_failed_slm_agents() {
        let c = cfg();
        let mut o = slm_agree(2, 2);
        o[2] = AgentOutput::failed(AgentId::Spatial, FailureKind::Timeout);
        o[3] = AgentOutput::failed(AgentId::Temporal, FailureKind::Timeout);
        let b = weighted_scores(&o, &c).unwrap();
        // 2 of 4 configured agree, not 2 of 2
        assert_eq!(agreement_boost(Severity::TWO, &b, &c), 0.0);
    }

    #[test]
    fn weighted_average_examples() {
        let c = cfg();
        let o = vec![out(AgentId::Environmental, 4, 0.9), out(AgentId::Infrastructural, 4, 0.7)];
        let v = weighted_avg_confidence(Severity::FOUR, &o, &c);
        assert!((v - (1.35 + 0.84) / 2.7).abs() < 1e-12);
        let o = vec![out(AgentId::Spatial, 3, 0.37)];
        assert_eq!(weighted_avg_confidence(Severity::THREE, &o, &c), 0.37);
        assert_eq!(weighted_avg_confidence(Severity::ONE, &o, &c), 0.1);
    }

    #[test]
    fn rb_override_common() {
        let r = coordinate_rb(&example(), &cfg()).unwrap();
        assert_eq!(r.prediction, Severity::TWO);
        assert_eq!(r.confidence, 0.8);
        assert!(r.override_applied);
        assert!(r.breakdown.is_some());
    }

    #[test]
    fn rb_vote_path() {
        let o = five((2, 0.7), (4, 0.9), (4, 0.7), (2, 0.6), (3, 0.5));
        let r = coordinate_rb(&o, &cfg()).unwrap();
        assert!(!r.override_applied);
        assert_eq!(r.prediction, Severity::TWO);
        assert!((r.confidence - 0.675).abs() < 1e-12);
        assert_eq!(r.boost_applied, 0.0);
    }

    #[test]
    fn rb_override_rare_capped() {
        let o = five((4, 0.85), (2, 0.9), (2, 0.7), (2, 0.6), (2, 0.5));
        let r = coordinate_rb(&o, &cfg()).unwrap();
        assert_eq!((r.prediction, r.confidence), (Severity::FOUR, 0.95));
    }

    #[test]
    fn rb_override_common_is_capped_too() {
        let o = five((3, 0.99), (2, 0.9), (2, 0.7), (2, 0.6), (2, 0.5));
        let r = coordinate_rb(&o, &cfg()).unwrap();
        assert_eq!((r.prediction, r.confidence), (Severity::THREE, 0.95));
    }

    #[test]
    fn majority_vote_counts_heads() {
        let r = coordinate_majority(&example(), &cfg()).unwrap();
        // 2 and 4 both have two votes; class 4 has more summed confidence
        assert_eq!(r.prediction, Severity::FOUR);
        assert!((r.confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn meta_prompt_blocks() {
        let mut o = vec![out(AgentId::Environmental, 4, 0.9).with_reasoning("fog"), out(AgentId::Ml, 2, 0.8)];
        o.push(AgentOutput::failed(AgentId::Spatial, FailureKind::Parse));
        let p = format_meta_prompt(&o, &cfg());
        let ml = p.find("[ML]").unwrap();
        let env = p.find("[Environmental]").unwrap();
        assert!(ml < env);
        assert!(p.contains("weight: 3.0"));
        assert!(p.contains("weight: 1.5"));
        assert!(p.contains("reasoning: (none)"));
        assert!(p.contains("reasoning: fog"));
        assert!(!p.contains("[Spatial]"));
        assert!(p.contains("\"severity\""));
    }

    #[test]
    fn llm_success_path() {
        let b = ScriptedBackend::constant(r#"{"severity":3,"confidence":0.7,"reasoning":"majority"}"#);
        let r = coordinate_llm(&example(), &b, &cfg()).unwrap();
        assert_eq!((r.prediction, r.confidence, r.method), (Severity::THREE, 0.7, CoordinationMode::LlmBased));
        assert_eq!(r.reasoning, "majority");
    }

    #[test]
    fn llm_timeout_falls_back_to_rule_based() {
        let c = EngineConfig { agent_timeout_ms: 20, ..cfg() };
        let b = ScriptedBackend::constant("{}").with_delay(Duration::from_millis(200));
        let r = coordinate_llm(&example(), &b, &c).unwrap();
        let mut rb = coordinate_rb(&example(), &c).unwrap();
        rb.llm_fallback = Some(FailureKind::Timeout);
        assert_eq!(r, rb);
    }

    #[test]
    fn llm_out_of_range_severity_falls_back() {
        let b = ScriptedBackend::constant(r#"{"severity":7,"confidence":0.7,"reasoning":"x"}"#);
        let r = coordinate_llm(&example(), &b, &cfg()).unwrap();
        assert_eq!(r.llm_fallback, Some(FailureKind::Parse));
        assert_eq!(r.method, CoordinationMode::RuleBased);
        let b = ScriptedBackend::fallible(|_| Err(BackendError::Transport { status: Some(500), message: String::new() }));
        assert_eq!(coordinate_llm(&example(), &b, &cfg()).unwrap().llm_fallback, Some(FailureKind::Transport));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_outputs() -> impl Strategy<Value = Vec<AgentOutput>> {
            proptest::collection::vec((1u8..=4, 0.0f64..=1.0, proptest::bool::weighted(0.1)), 5).prop_map(|v| {
                AgentId::ALL
                    .iter()
                    .zip(v)
                    .map(|(&a, (k, c, fail))| {
                        if fail { AgentOutput::failed(a, FailureKind::Parse) } else { out(a, k, c) }
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn uniform_scaling_scales_scores(o in arb_outputs(), lambda in 0.01f64..=1.0) {
                let c = cfg();
                let Ok(b) = weighted_scores(&o, &c) else { return Ok(()) };
                let scaled: Vec<_> = o.iter().cloned().map(|mut x| { x.confidence *= lambda; x }).collect();
                let bs = weighted_scores(&scaled, &c).unwrap();
                for k in Severity::ALL {
                    prop_assert!((bs.scores[k] - lambda * b.scores[k]).abs() < 1e-12);
                }
                let max = b.scores.0.iter().copied().fold(0.0, f64::max);
                let top: Vec<_> = Severity::ALL.into_iter().filter(|&k| max - b.scores[k] <= 1e-6).collect();
                if top.len() == 1 {
                    prop_assert_eq!(rb_predict(&bs, &c), top[0]);
                }
            }

            #[test]
            fn rb_confidence_capped_and_override_precedence(o in arb_outputs()) {
                let c = cfg();
                let Ok(r) = coordinate_rb(&o, &c) else { return Ok(()) };
                prop_assert!(r.confidence <= 0.95 && r.confidence >= 0.0);
                if check_ml_override(&o, &c) {
                    prop_assert_eq!(Some(r.prediction), o.iter().find(|x| x.agent == AgentId::Ml).map(|x| x.prediction));
                }
                let b = r.breakdown.unwrap();
                for k in Severity::ALL {
                    prop_assert!(b.scores[k] >= 0.0);
                    prop_assert!(b.slm_supporters[k].iter().all(|a| b.supporters[k].contains(a)));
                }
            }
        }
    }
}
