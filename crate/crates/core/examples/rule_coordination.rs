//! Walk one set of agent outputs through weighted voting and the final
//! decision cascade.
//!
//!     cargo run --example rule_coordination

use marble::coordination::{check_ml_override, weighted_scores};
use marble::types::{AgentId, AgentOutput, Severity};
use marble::{coordinate_rb, final_decide, EngineConfig};

fn main() {
    let cfg = EngineConfig::default();
    let outputs = vec![
        AgentOutput::new(AgentId::Ml, Severity::TWO, 0.62),
        AgentOutput::new(AgentId::Environmental, Severity::FOUR, 0.85),
        AgentOutput::new(AgentId::Infrastructural, Severity::TWO, 0.55),
        AgentOutput::new(AgentId::Spatial, Severity::FOUR, 0.7),
        AgentOutput::new(AgentId::Temporal, Severity::THREE, 0.4),
    ];

    let b = weighted_scores(&outputs, &cfg).expect("non-empty");
    for k in Severity::ALL {
        println!("class {k}: score {:.3}  supporters {:?}", b.scores[k], b.supporters[k]);
    }

    let coord = coordinate_rb(&outputs, &cfg).expect("non-empty");
    println!(
        "coordinator: {} at {:.3} (boost {:.2}, override {})",
        coord.prediction, coord.confidence, coord.boost_applied, coord.override_applied
    );

    let ml = outputs.iter().find(|o| o.agent == AgentId::Ml);
    let d = final_decide(ml, &coord, check_ml_override(&outputs, &cfg), &cfg);
    println!("final: {} at {:.3} from {} by rule {}", d.prediction, d.confidence, d.source, d.rule_fired);
}
