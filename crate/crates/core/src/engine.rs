//! The three-stage inference protocol.
//!
//! 1. project the record onto each agent's feature subset
//! 2. dispatch every agent concurrently and wait until each one has
//!    answered or the per-agent deadline has passed
//! 3. coordinate the successful outputs and run the final decision
//!
//! Agents run on detached threads so a hung agent cannot hold the barrier
//! past its deadline. Anything it sends afterwards is dropped.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::agents::{backend_from_spec, Agent, MlAgent, PosteriorModel, SlmAgent, SlmBackend};
use crate::config::{CoordinationMode, EngineConfig};
use crate::coordination::{
    check_ml_override, coordinate_llm, coordinate_majority, coordinate_rb, CoordinationError,
};
use crate::decision::{final_decide, FinalDecision};
use crate::features::{project, AccidentRecord, FeatureRegistry};
use crate::trace::{Timings, TraceRecord};
use crate::types::{AgentId, AgentOutput, FailureKind, Severity};

/// Extra wait past the agent timeout, so that an agent honoring its own
/// timeout can still report it before the barrier gives up on it.
const DEADLINE_GRACE: Duration = Duration::from_millis(100);

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("no agents configured")]
    NoAgents,
    #[error("agent {0} configured twice")]
    DuplicateAgent(AgentId),
    #[error("llm coordination needs a coordinator backend")]
    NoCoordinatorBackend,
    #[error("config has no `backend` for the language-model agents")]
    NoAgentBackend,
    #[error("every agent failed on record `{record_id}`")]
    AllAgentsFailed { record_id: String },
    #[error("trace sink: {0}")]
    Io(#[from] std::io::Error),
}

/// One batch entry: a decision or an explicit abstention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Decided(FinalDecision),
    Abstained,
}

impl Outcome {
    pub fn prediction(&self) -> Option<Severity> {
        match self {
            Outcome::Decided(d) => Some(d.prediction),
            Outcome::Abstained => None,
        }
    }

    pub fn decision(&self) -> Option<&FinalDecision> {
        match self {
            Outcome::Decided(d) => Some(d),
            Outcome::Abstained => None,
        }
    }
}

#[derive(Clone)]
pub struct Engine {
    cfg: Arc<EngineConfig>,
    registry: Arc<FeatureRegistry>,
    agents: Vec<Arc<dyn Agent>>,
    coordinator: Option<Arc<dyn SlmBackend>>,
    fingerprint: String,
    workers: Option<usize>,
}

impl Engine {
    /// The coordinator backend defaults to the one described by the config,
    /// if any.
    pub fn new(
        cfg: EngineConfig,
        registry: FeatureRegistry,
        agents: Vec<Arc<dyn Agent>>,
    ) -> Result<Self, EngineError> {
        if agents.is_empty() {
            return Err(EngineError::NoAgents);
        }
        let mut seen = Vec::new();
        for a in &agents {
            if seen.contains(&a.id()) {
                return Err(EngineError::DuplicateAgent(a.id()));
            }
            seen.push(a.id());
        }
        let coordinator = cfg.effective_coordinator_backend().map(backend_from_spec);
        Ok(Engine {
            fingerprint: cfg.fingerprint(),
            cfg: Arc::new(cfg),
            registry: Arc::new(registry),
            agents,
            coordinator,
            workers: None,
        })
    }

    /// Engine over the standard agent set described by `cfg`: language-model
    /// agents on `cfg.backend`, plus the ML agent when a model is given.
    pub fn from_config(
        cfg: EngineConfig,
        registry: FeatureRegistry,
        ml: Option<Arc<dyn PosteriorModel>>,
    ) -> Result<Self, EngineError> {
        let agents = build_agents(&cfg, ml)?;
        Engine::new(cfg, registry, agents)
    }

    pub fn with_coordinator_backend(mut self, backend: Arc<dyn SlmBackend>) -> Self {
        self.coordinator = Some(backend);
        self
    }

    /// Caps the number of records processed at once by `run_batch`.
    pub fn with_workers(mut self, n: usize) -> Self {
        self.workers = Some(n.max(1));
        self
    }

    /// Same agents and registry under a different coordination mode.
    pub fn with_mode(&self, mode: CoordinationMode) -> Self {
        let mut cfg = (*self.cfg).clone();
        cfg.coordination_mode = mode;
        let mut e = self.clone();
        e.fingerprint = cfg.fingerprint();
        e.cfg = Arc::new(cfg);
        e
    }

    /// Same configuration with one agent removed. `None` if that agent is
    /// not configured or is the only one.
    pub fn without_agent(&self, id: AgentId) -> Option<Self> {
        if !self.agents.iter().any(|a| a.id() == id) || self.agents.len() < 2 {
            return None;
        }
        let mut e = self.clone();
        e.agents.retain(|a| a.id() != id);
        Some(e)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &FeatureRegistry {
        &self.registry
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id()).collect()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn check_ready(&self) -> Result<(), EngineError> {
        if self.cfg.coordination_mode == CoordinationMode::LlmBased && self.coordinator.is_none() {
            return Err(EngineError::NoCoordinatorBackend);
        }
        Ok(())
    }

    /// Runs one record through the protocol. The trace is produced even
    /// when every agent fails.
    pub fn trace_instance(&self, record: &AccidentRecord) -> Result<(Outcome, TraceRecord), EngineError> {
        self.check_ready()?;
        Ok(self.process(record))
    }

    pub fn run_instance(&self, record: &AccidentRecord) -> Result<(FinalDecision, TraceRecord), EngineError> {
        match self.trace_instance(record)? {
            (Outcome::Decided(d), t) => Ok((d, t)),
            (Outcome::Abstained, _) => Err(EngineError::AllAgentsFailed {
                record_id: record.id.clone(),
            }),
        }
    }

    /// Runs every record and keeps the traces in memory. Output order is
    /// input order.
    pub fn run_records(&self, records: &[AccidentRecord]) -> Result<Vec<(Outcome, TraceRecord)>, EngineError> {
        self.check_ready()?;
        let work = || records.par_iter().map(|r| self.process(r)).collect::<Vec<_>>();
        Ok(match self.workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| EngineError::Io(std::io::Error::other(e)))?
                .install(work),
            None => work(),
        })
    }

    /// Like `run_records`, appending one JSON trace line per record to
    /// `trace_sink`. The sink is created before any record is processed.
    pub fn run_batch(
        &self,
        records: &[AccidentRecord],
        trace_sink: impl AsRef<Path>,
    ) -> Result<Vec<Outcome>, EngineError> {
        let mut sink = BufWriter::new(File::create(trace_sink)?);
        let results = self.run_records(records)?;
        let mut outcomes = Vec::with_capacity(results.len());
        for (outcome, trace) in results {
            sink.write_all(trace.to_json_line().as_bytes())?;
            sink.write_all(b"\n")?;
            outcomes.push(outcome);
        }
        sink.flush()?;
        Ok(outcomes)
    }

    fn process(&self, record: &AccidentRecord) -> (Outcome, TraceRecord) {
        let start = Instant::now();
        let ms = |t: Instant| t.duration_since(start).as_secs_f64() * 1000.0;

        // stage 1
        let projections: IndexMap<AgentId, _> = self
            .agents
            .iter()
            .map(|a| (a.id(), project(record, a.id(), &self.registry)))
            .collect();
        let projection_ms = ms(Instant::now());

        // stage 2
        let (tx, rx) = mpsc::channel();
        for (i, agent) in self.agents.iter().enumerate() {
            let agent = Arc::clone(agent);
            let features = projections[i].clone();
            let tx = tx.clone();
            std::thread::spawn(move || {
                let out = agent.evaluate(&features);
                let _ = tx.send((i, out, Instant::now()));
            });
        }
        drop(tx);
        let timeout = Duration::from_millis(self.cfg.agent_timeout_ms);
        let deadline = Instant::now() + timeout + DEADLINE_GRACE;
        let mut slots: Vec<Option<(AgentOutput, Instant)>> = vec![None; self.agents.len()];
        let mut pending = self.agents.len();
        while pending > 0 {
            let left = deadline.saturating_duration_since(Instant::now());
            match rx.recv_timeout(left) {
                Ok((i, out, at)) => {
                    slots[i] = Some((out, at));
                    pending -= 1;
                }
                Err(_) => break,
            }
        }
        let expired = Instant::now();
        let mut agent_times = IndexMap::new();
        let outputs: Vec<AgentOutput> = self
            .agents
            .iter()
            .zip(slots)
            .map(|(agent, slot)| match slot {
                Some((mut out, at)) => {
                    out.agent = agent.id();
                    agent_times.insert(agent.id(), ms(at));
                    out
                }
                None => {
                    agent_times.insert(agent.id(), ms(expired));
                    let mut out = AgentOutput::failed(agent.id(), FailureKind::Timeout);
                    out.latency_ms = timeout.as_millis() as u64;
                    out
                }
            })
            .collect();

        // stage 3
        let stage3_start_ms = ms(Instant::now());
        let coordinated = match self.cfg.coordination_mode {
            CoordinationMode::RuleBased => coordinate_rb(&outputs, &self.cfg),
            CoordinationMode::MajorityVote => coordinate_majority(&outputs, &self.cfg),
            CoordinationMode::LlmBased => coordinate_llm(
                &outputs,
                self.coordinator.as_deref().expect("checked by check_ready"),
                &self.cfg,
            ),
        };
        let (coordination, decision) = match coordinated {
            Ok(coord) => {
                let override_met = self.cfg.coordination_mode != CoordinationMode::MajorityVote
                    && check_ml_override(&outputs, &self.cfg);
                let ml = outputs.iter().find(|o| o.agent == AgentId::Ml);
                let d = final_decide(ml, &coord, override_met, &self.cfg);
                (Some(coord), Some(d))
            }
            Err(CoordinationError::EmptyInput) => (None, None),
            Err(CoordinationError::DuplicateAgent(_)) => unreachable!("agent ids are unique"),
        };
        let trace = TraceRecord {
            record_id: record.id.clone(),
            projections,
            agent_outputs: outputs,
            coordination,
            decision,
            timings: Timings {
                projection_ms,
                agents: agent_times,
                stage3_start_ms,
                total_ms: ms(Instant::now()),
            },
            config_fingerprint: self.fingerprint.clone(),
        };
        let outcome = decision.map_or(Outcome::Abstained, Outcome::Decided);
        (outcome, trace)
    }
}

/// The standard agent set: the four language-model agents on the config's
/// backend, plus the ML agent when a model is given.
pub fn build_agents(
    cfg: &EngineConfig,
    ml: Option<Arc<dyn PosteriorModel>>,
) -> Result<Vec<Arc<dyn Agent>>, EngineError> {
    let spec = cfg.backend.as_ref().ok_or(EngineError::NoAgentBackend)?;
    let backend = backend_from_spec(spec);
    let shared = Arc::new(cfg.clone());
    let mut agents: Vec<Arc<dyn Agent>> = Vec::new();
    if let Some(model) = ml {
        agents.push(Arc::new(MlAgent::new(model)));
    }
    for id in AgentId::SLM {
        agents.push(Arc::new(SlmAgent::new(id, Arc::clone(&backend), Arc::clone(&shared))));
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ScriptedAgent;
    use crate::decision::DecisionSource;
    use crate::features::FeatureValue;

    fn unanimous(ml_conf: f64) -> Vec<Arc<dyn Agent>> {
        AgentId::ALL
            .iter()
            .map(|&id| {
                let c = if id == AgentId::Ml { ml_conf } else { 0.9 };
                Arc::new(ScriptedAgent::fixed(id, Severity::THREE, c)) as Arc<dyn Agent>
            })
            .collect()
    }

    fn engine(agents: Vec<Arc<dyn Agent>>) -> Engine {
        Engine::new(EngineConfig::default(), FeatureRegistry::default(), agents).unwrap()
    }

    fn record(id: &str) -> AccidentRecord {
        AccidentRecord::new(id)
            .with("Weather Conditions", FeatureValue::categorical("Fog"))
            .with("Speed Limit", FeatureValue::with_unit(30.0, "mph"))
    }

    #[test]
    fn unanimous_agents_without_ml_override() {
        let (d, t) = engine(unanimous(0.7)).run_instance(&record("r")).unwrap();
        // c̄ = (3·0.7 + 4.7·0.9) / 7.7, plus the common boost
        let expect = (3.0 * 0.7 + 4.7 * 0.9) / 7.7 + 0.05;
        assert_eq!((d.prediction, d.rule_fired, d.source), (Severity::THREE, 2, DecisionSource::Coordinator));
        assert!((d.confidence - expect).abs() < 1e-12);
        assert_eq!(t.agent_outputs.len(), 5);
    }

    #[test]
    fn unanimous_agents_with_confident_ml_take_override() {
        let (d, _) = engine(unanimous(0.9)).run_instance(&record("r")).unwrap();
        assert_eq!((d.prediction, d.rule_fired, d.confidence), (Severity::THREE, 1, 0.9));
    }

    #[test]
    fn projections_follow_domains() {
        let (_, t) = engine(unanimous(0.7)).run_instance(&record("r")).unwrap();
        assert_eq!(t.projections[&AgentId::Ml].len(), 2);
        assert!(t.projections[&AgentId::Environmental].contains_key("Weather Conditions"));
        assert!(!t.projections[&AgentId::Environmental].contains_key("Speed Limit"));
        assert!(t.projections[&AgentId::Infrastructural].contains_key("Speed Limit"));
    }

    #[test]
    fn timed_out_agent_is_excluded() {
        let cfg = EngineConfig { agent_timeout_ms: 50, ..EngineConfig::default() };
        let mut agents = unanimous(0.7);
        agents[1] = Arc::new(
            ScriptedAgent::fixed(AgentId::Environmental, Severity::ONE, 1.0).with_delay(Duration::from_millis(1000)),
        );
        let e = Engine::new(cfg, FeatureRegistry::default(), agents).unwrap();
        let started = Instant::now();
        let (d, t) = e.run_instance(&record("r")).unwrap();
        assert!(started.elapsed() < Duration::from_millis(800));
        let env = &t.agent_outputs[1];
        assert_eq!((env.failed, env.failure), (true, Some(FailureKind::Timeout)));
        assert_eq!(d.prediction, Severity::THREE);
        let b = t.coordination.unwrap().breakdown.unwrap();
        assert_eq!(b.supporters[Severity::THREE].len(), 4);
        assert_eq!(b.slm_pool, 4);
    }

    #[test]
    fn all_failed_is_an_abstention() {
        let agents: Vec<Arc<dyn Agent>> = AgentId::SLM
            .iter()
            .map(|&id| Arc::new(ScriptedAgent::failing(id, FailureKind::Parse)) as Arc<dyn Agent>)
            .collect();
        let e = engine(agents);
        assert!(matches!(e.run_instance(&record("x")), Err(EngineError::AllAgentsFailed { record_id }) if record_id == "x"));
        let (o, t) = e.trace_instance(&record("x")).unwrap();
        assert_eq!(o, Outcome::Abstained);
        assert!(t.abstained() && t.coordination.is_none());
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Engine::new(EngineConfig::default(), FeatureRegistry::default(), vec![]),
            Err(EngineError::NoAgents)
        ));
        let dup: Vec<Arc<dyn Agent>> = vec![
            Arc::new(ScriptedAgent::fixed(AgentId::Spatial, Severity::ONE, 0.5)),
            Arc::new(ScriptedAgent::fixed(AgentId::Spatial, Severity::ONE, 0.5)),
        ];
        assert!(matches!(
            Engine::new(EngineConfig::default(), FeatureRegistry::default(), dup),
            Err(EngineError::DuplicateAgent(AgentId::Spatial))
        ));
        let e = engine(unanimous(0.7)).with_mode(CoordinationMode::LlmBased);
        assert!(matches!(e.run_instance(&record("r")), Err(EngineError::NoCoordinatorBackend)));
    }

    #[test]
    fn batch_preserves_order_and_marks_abstentions() {
        let agents: Vec<Arc<dyn Agent>> = AgentId::SLM
            .iter()
            .map(|&id| {
                Arc::new(ScriptedAgent::new(id, move |f| {
                    if f.contains_key("poison") {
                        return AgentOutput::failed(id, FailureKind::Parse);
                    }
                    AgentOutput::new(id, Severity::TWO, 0.6)
                })) as Arc<dyn Agent>
            })
            .collect();
        let reg = FeatureRegistry::new({
            let mut s = FeatureRegistry::default().specs().to_vec();
            s.push(crate::features::FeatureSpec {
                name: "poison".into(),
                domains: AgentId::SLM.to_vec(),
                kind: Default::default(),
                unit: None,
            });
            s
        })
        .unwrap();
        let e = Engine::new(EngineConfig::default(), reg, agents).unwrap().with_workers(3);
        let mut records: Vec<_> = (0..5).map(|i| AccidentRecord::new(format!("r{i}"))).collect();
        records[2] = records[2].clone().with("poison", FeatureValue::numeric(1.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let out = e.run_batch(&records, &path).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(out.iter().filter(|o| **o == Outcome::Abstained).count(), 1);
        assert_eq!(out[2], Outcome::Abstained);
        let text = std::fs::read_to_string(&path).unwrap();
        let ids: Vec<String> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["record_id"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(ids, ["r0", "r1", "r2", "r3", "r4"]);
    }

    #[test]
    fn unwritable_sink_fails_before_work() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = Arc::new(AtomicUsize::new(0));
        let c = Arc::clone(&calls);
        let agent = ScriptedAgent::new(AgentId::Spatial, move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            AgentOutput::new(AgentId::Spatial, Severity::TWO, 0.5)
        });
        let e = engine(vec![Arc::new(agent)]);
        let err = e.run_batch(&[record("a")], "/nonexistent-dir/trace.jsonl").unwrap_err();
        assert!(matches!(err, EngineError::Io(_)));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }
}
