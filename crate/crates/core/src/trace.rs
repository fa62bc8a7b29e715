//! Per-record audit records, written as JSON Lines.

use std::io::{self, BufRead};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::coordination::CoordinationResult;
use crate::decision::FinalDecision;
use crate::features::FeatureMap;
use crate::types::{AgentId, AgentOutput};

/// Wall-clock offsets from the start of the record, in milliseconds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub projection_ms: f64,
    /// When each agent resolved. Agents that missed the deadline are
    /// stamped with the moment the deadline expired.
    pub agents: IndexMap<AgentId, f64>,
    pub stage3_start_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub record_id: String,
    pub projections: IndexMap<AgentId, FeatureMap>,
    pub agent_outputs: Vec<AgentOutput>,
    /// Absent when every agent failed.
    pub coordination: Option<CoordinationResult>,
    /// `null` marks an abstention.
    pub decision: Option<FinalDecision>,
    pub timings: Timings,
    pub config_fingerprint: String,
}

impl TraceRecord {
    pub fn abstained(&self) -> bool {
        self.decision.is_none()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records serialize")
    }
}

/// Removes everything that depends on wall-clock time: the `timings`
/// object and each agent's `latency_ms`.
pub fn strip_timing(value: &mut serde_json::Value) {
    if let Some(obj) = value.as_object_mut() {
        obj.remove("timings");
        if let Some(outputs) = obj.get_mut("agent_outputs").and_then(|v| v.as_array_mut()) {
            for o in outputs {
                if let Some(o) = o.as_object_mut() {
                    o.remove("latency_ms");
                }
            }
        }
    }
}

/// Reads a trace file and returns its lines with timing removed, suitable
/// for comparing two runs.
pub fn timing_free_lines(path: impl AsRef<Path>) -> io::Result<Vec<String>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        strip_timing(&mut v);
        out.push(v.to_string());
    }
    Ok(out)
}
