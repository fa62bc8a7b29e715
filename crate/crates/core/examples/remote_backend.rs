//! Query an OpenAI-compatible chat endpoint as the environmental agent.
//!
//!     MARBLE_ENDPOINT=http://localhost:8000/v1/chat/completions \
//!     MARBLE_MODEL=mistral-7b cargo run --example remote_backend
//!
//! Without `MARBLE_ENDPOINT` it only prints the prompt and request body.

use std::sync::Arc;

use marble::agents::{build_prompt, Agent, PromptTemplate, RemoteBackend, SlmAgent};
use marble::features::{format_features, project};
use marble::types::AgentId;
use marble::{AccidentRecord, EngineConfig, FeatureRegistry, FeatureValue};

fn main() {
    let cfg = Arc::new(EngineConfig::default());
    let registry = FeatureRegistry::default();
    let record = AccidentRecord::new("demo")
        .with("Weather Conditions", FeatureValue::categorical("Heavy Rain"))
        .with("Light Conditions", FeatureValue::categorical("Darkness - no lighting"))
        .with("Visibility", FeatureValue::with_unit(0.5, "mi"));
    let view = project(&record, AgentId::Environmental, &registry);
    let prompt = build_prompt(
        &PromptTemplate::for_domain(AgentId::Environmental).expect("domain agent"),
        &format_features(&view),
    );

    let endpoint = std::env::var("MARBLE_ENDPOINT").ok();
    let model = std::env::var("MARBLE_MODEL").unwrap_or_else(|_| "mistral-7b-instruct".into());
    let backend = RemoteBackend::new(endpoint.clone().unwrap_or_default(), model, std::env::var("MARBLE_API_KEY").ok());

    let Some(_) = endpoint else {
        println!("{prompt}\n");
        let body = backend.request_body(&prompt, &cfg.decoding, true);
        println!("{}", serde_json::to_string_pretty(&body).unwrap());
        return;
    };
    let agent = SlmAgent::new(AgentId::Environmental, Arc::new(backend), cfg);
    let out = agent.evaluate(&view);
    if out.failed {
        println!("agent failed: {:?}", out.failure);
    } else {
        println!("severity {} at {:.2}: {}", out.prediction, out.confidence, out.reasoning);
    }
}
