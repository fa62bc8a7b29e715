//! Compare rule-based and LLM coordination as the label mix shifts.
//!
//!     cargo run --example imbalance -- 42

use std::sync::Arc;

use marble::agents::Agent;
use marble::eval::{default_scenarios, most_skewed, run_imbalance_suite};
use marble::synth::{fallible_coordinator, generate, signal_agent, synthetic_registry, AgentProfile, SyntheticSpec};
use marble::types::AgentId;
use marble::{Engine, EngineConfig};

fn main() -> marble::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(11);
    let spec = SyntheticSpec::uniform(4000, 0.55, 0.55)
        .with_agent(AgentId::Ml, AgentProfile::new(0.75, 0.7))
        .with_agent(AgentId::Environmental, AgentProfile::new(0.65, 0.65))
        .with_agent(AgentId::Infrastructural, AgentProfile::new(0.6, 0.6));
    let agents: Vec<Arc<dyn Agent>> = AgentId::ALL.iter().map(|&a| Arc::new(signal_agent(a)) as _).collect();
    // a coordinator model that garbles 30% of its replies
    let engine = Engine::new(EngineConfig::default(), synthetic_registry(), agents)?
        .with_coordinator_backend(Arc::new(fallible_coordinator(0.3)));

    let scenarios = default_scenarios();
    let report = run_imbalance_suite(&engine, &generate(&spec, seed), &scenarios, 1000, seed)?;
    println!("{:<20} {:>8} {:>8} {:>9}", "scenario", "rule F1", "llm F1", "fallback");
    for (name, r) in &report.scenarios {
        println!(
            "{name:<20} {:>8.4} {:>8.4} {:>8.1}%",
            r.rule_based.f1,
            r.llm_based.f1,
            r.llm_fallback_rate * 100.0
        );
    }
    let worst = most_skewed(&scenarios).expect("non-empty");
    let (rb, llm) = report.f1_degradation("uniform", &worst.name).expect("both present");
    println!("macro F1 lost going to {}: rule {rb:.4}, llm {llm:.4}", worst.name);
    Ok(())
}
