//! Train the statistical agent on the sample data and inspect it.
//!
//!     cargo run --example train_ml

use std::path::Path;

use marble::agents::{ml_evaluate, MlModel, PosteriorModel};
use marble::features::{ingest_csv, project, IngestOptions};
use marble::types::AgentId;
use marble::FeatureRegistry;

fn main() -> marble::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let registry = FeatureRegistry::default();
    let train = ingest_csv(data.join("train.csv"), &registry, &IngestOptions::default())?;
    let test = ingest_csv(data.join("accidents.csv"), &registry, &IngestOptions::default())?;
    let model = MlModel::train(&train.records)?;

    println!("most informative features:");
    for (name, score) in model.feature_importance().iter().take(6) {
        println!("  {name:<24} {score:.4}");
    }

    let mut hits = 0;
    for r in &test.records {
        let view = project(r, AgentId::Ml, &registry);
        let out = ml_evaluate(&model, &view);
        if Some(out.prediction) == r.label {
            hits += 1;
        }
    }
    println!("held-out accuracy {}/{}", hits, test.records.len());

    let first = project(&test.records[0], AgentId::Ml, &registry);
    println!("posterior for {}: {:?}", test.records[0].id, model.posterior(&first));
    Ok(())
}
