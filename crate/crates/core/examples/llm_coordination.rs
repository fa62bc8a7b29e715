//! Coordination through a language model, and what happens when its reply
//! can't be parsed.
//!
//!     cargo run --example llm_coordination

use marble::agents::ScriptedBackend;
use marble::coordination::format_meta_prompt;
use marble::types::{AgentId, AgentOutput, Severity};
use marble::{coordinate_llm, EngineConfig};

fn main() {
    let cfg = EngineConfig::default();
    let outputs = vec![
        AgentOutput::new(AgentId::Ml, Severity::THREE, 0.58).with_reasoning("posterior peak at 3"),
        AgentOutput::new(AgentId::Environmental, Severity::FOUR, 0.8).with_reasoning("dense fog at night"),
        AgentOutput::new(AgentId::Spatial, Severity::THREE, 0.6).with_reasoning("rural highway"),
    ];
    println!("--- meta-prompt ---\n{}\n", format_meta_prompt(&outputs, &cfg));

    let good = ScriptedBackend::constant(r#"{"severity": 4, "confidence": 0.72, "reasoning": "fog dominates"}"#);
    let r = coordinate_llm(&outputs, &good, &cfg).unwrap();
    println!("llm reply: {} at {:.2}, fallback {:?}", r.prediction, r.confidence, r.llm_fallback);

    let rambling = ScriptedBackend::constant("Hard to say, maybe serious?");
    let r = coordinate_llm(&outputs, &rambling, &cfg).unwrap();
    println!(
        "unparseable reply: {} at {:.3} via {:?}, fallback {:?}",
        r.prediction, r.confidence, r.method, r.llm_fallback
    );
}
