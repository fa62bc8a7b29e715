//! Run the same batch twice and confirm the traces agree once timing fields
//! are removed.
//!
//!     cargo run --example trace_replay

use std::path::Path;

use marble::features::{ingest_csv, IngestOptions};
use marble::trace::timing_free_lines;
use marble::{Engine, EngineConfig, FeatureRegistry};

fn main() -> marble::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let registry = FeatureRegistry::default();
    let input = ingest_csv(data.join("accidents.csv"), &registry, &IngestOptions::default())?;
    let engine = Engine::from_config(EngineConfig::from_path(data.join("config.json"))?, registry, None)?;

    let dir = std::env::temp_dir();
    println!("config fingerprint {}", engine.fingerprint());
    let (a, b) = (dir.join("marble-run-a.jsonl"), dir.join("marble-run-b.jsonl"));
    engine.run_batch(&input.records, &a)?;
    engine.with_workers(1).run_batch(&input.records, &b)?;

    let (la, lb) = (timing_free_lines(&a)?, timing_free_lines(&b)?);
    let differing = la.iter().zip(&lb).filter(|(x, y)| x != y).count();
    println!("{} lines each, {differing} differ after stripping timings", la.len());
    println!("first line: {}", la[0]);
    Ok(())
}
