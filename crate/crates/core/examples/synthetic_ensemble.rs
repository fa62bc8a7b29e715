//! Five moderately accurate agents with independent errors, fused.
//!
//!     cargo run --example synthetic_ensemble -- 0.65

use std::sync::Arc;

use marble::agents::Agent;
use marble::eval::evaluate;
use marble::synth::{generate, signal_agent, synthetic_registry, SyntheticSpec};
use marble::types::AgentId;
use marble::{Engine, EngineConfig};

fn main() -> marble::Result<()> {
    let acc: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0.7);
    let agents: Vec<Arc<dyn Agent>> = AgentId::ALL.iter().map(|&a| Arc::new(signal_agent(a)) as _).collect();
    let engine = Engine::new(EngineConfig::default(), synthetic_registry(), agents)?;

    for seed in 0..3 {
        let records = generate(&SyntheticSpec::uniform(2000, acc, 0.7), seed);
        let (m, _) = evaluate(&engine, &records)?;
        println!("seed {seed}: per-agent accuracy {acc:.2}, ensemble {:.3}, macro F1 {:.3}", m.accuracy, m.f1);
    }
    Ok(())
}
