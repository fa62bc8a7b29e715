//! Leave-one-out ablation over a synthetic set where one agent carries most
//! of the signal and one is noise.
//!
//!     cargo run --example ablation

use std::sync::Arc;

use marble::agents::Agent;
use marble::eval::{run_ablation, write_json};
use marble::synth::{generate, signal_agent, synthetic_registry, AgentProfile, SyntheticSpec};
use marble::types::AgentId;
use marble::{Engine, EngineConfig};

fn main() -> marble::Result<()> {
    let spec = SyntheticSpec::uniform(2000, 0.4, 0.5)
        .with_agent(AgentId::Ml, AgentProfile::new(0.45, 0.45))
        .with_agent(AgentId::Environmental, AgentProfile::new(0.9, 0.85))
        .with_agent(AgentId::Temporal, AgentProfile::new(0.25, 0.4));
    let agents: Vec<Arc<dyn Agent>> = AgentId::ALL.iter().map(|&a| Arc::new(signal_agent(a)) as _).collect();
    let engine = Engine::new(EngineConfig::default(), synthetic_registry(), agents)?;

    let report = run_ablation(&engine, &generate(&spec, 7))?;
    for (variant, m) in &report.reports {
        let drop = report.relative_drop.get(variant).map(|d| format!("{:+.1}%", d * 100.0)).unwrap_or_default();
        println!("{variant:<16} accuracy {:.3}  {drop}", m.accuracy);
    }
    if let Some((agent, drop)) = report.steepest_agent() {
        println!("most load-bearing agent: {agent} ({:.1}%)", drop * 100.0);
    }
    let out = std::env::temp_dir().join("marble-ablation.json");
    write_json(&out, &report)?;
    println!("report written to {}", out.display());
    Ok(())
}
