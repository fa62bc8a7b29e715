//! Score the bundled accident sample with the scripted configuration and
//! write a trace.
//!
//!     cargo run --example predict_csv

use std::path::Path;
use std::sync::Arc;

use marble::agents::MlModel;
use marble::features::{ingest_csv, IngestOptions};
use marble::{Engine, EngineConfig, FeatureRegistry, Outcome};

fn main() -> marble::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let registry = FeatureRegistry::default();
    let opts = IngestOptions::default();

    let train = ingest_csv(data.join("train.csv"), &registry, &opts)?;
    let input = ingest_csv(data.join("accidents.csv"), &registry, &opts)?;
    let ml = MlModel::train(&train.records)?;

    let cfg = EngineConfig::from_path(data.join("config.json"))?;
    let engine = Engine::from_config(cfg, registry, Some(Arc::new(ml)))?;

    let trace = std::env::temp_dir().join("marble-predict.jsonl");
    let outcomes = engine.run_batch(&input.records, &trace)?;

    for (r, o) in input.records.iter().zip(&outcomes).take(10) {
        match o {
            Outcome::Decided(d) => println!(
                "{:<6} severity {}  conf {:.3}  via {} (rule {})",
                r.id, d.prediction, d.confidence, d.source, d.rule_fired
            ),
            Outcome::Abstained => println!("{:<6} abstained", r.id),
        }
    }
    println!("... {} records, trace in {}", outcomes.len(), trace.display());
    Ok(())
}
