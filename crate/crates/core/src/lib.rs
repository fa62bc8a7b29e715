//! Multi-agent severity prediction for traffic accidents.
//!
//! A record is split into domain views (environmental, infrastructural,
//! spatial, temporal), each handled by a language-model agent, while a
//! statistical ML agent sees every feature. Their outputs are fused by a
//! rule-based (or LLM-based) coordinator and a final decision cascade
//! chooses between the coordinated answer and the ML agent's own.
//!
//! ```no_run
//! use marble::{Engine, EngineConfig, FeatureRegistry};
//! use marble::features::{ingest_csv, IngestOptions};
//!
//! # fn main() -> marble::Result<()> {
//! let cfg = EngineConfig::from_path("config.json")?;
//! let registry = FeatureRegistry::default();
//! let data = ingest_csv("accidents.csv", &registry, &IngestOptions::default())?;
//! let engine = Engine::from_config(cfg, registry, None)?;
//! let outcomes = engine.run_batch(&data.records, "trace.jsonl")?;
//! # Ok(()) }
//! ```

pub mod agents;
pub mod config;
pub mod coordination;
pub mod decision;
pub mod engine;
mod error;
pub mod eval;
pub mod features;
pub mod synth;
pub mod trace;
pub mod types;

pub use config::{CoordinationMode, EngineConfig};
pub use coordination::{coordinate_llm, coordinate_rb, CoordinationResult};
pub use decision::{final_decide, DecisionSource, FinalDecision};
pub use engine::{Engine, EngineError, Outcome};
pub use error::{Error, Result};
pub use features::{AccidentRecord, FeatureRegistry, FeatureValue};
pub use trace::TraceRecord;
pub use types::{AgentId, AgentOutput, FailureKind, Severity};
