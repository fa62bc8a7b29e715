//! Extraction of `(severity, confidence, reasoning)` from free-form model
//! output: embedded JSON first, labeled numbers second.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{Map, Value};

use crate::types::{clamp_unit, Severity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no severity in 1..=4 recoverable from response")]
pub struct ParseError;

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub severity: Severity,
    /// Clamped to `[0, 1]`.
    pub confidence: f64,
    pub reasoning: String,
    pub confidence_clamped: bool,
    /// No confidence was stated; `confidence` holds [`DEFAULT_CONFIDENCE`].
    pub confidence_missing: bool,
}

/// Used when a response names a severity but no confidence.
pub const DEFAULT_CONFIDENCE: f64 = 0.5;

static SEVERITY_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\bseverity(?:[ _](?:class|level|rating))?["']?\s*[:=]\s*["']?(-?\d+(?:\.\d+)?)"#)
        .unwrap()
});
static CONFIDENCE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\bconfidence(?:[ _](?:score|level))?["']?\s*[:=]\s*["']?(-?\d*\.?\d+)\s*(%)?"#)
        .unwrap()
});
static REASONING_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?is)\breasoning["']?\s*[:=]\s*(.+)"#).unwrap());

pub fn parse_response(raw: &str) -> Result<ParsedResponse, ParseError> {
    parse_json(raw).or_else(|| parse_labeled(raw)).ok_or(ParseError)
}

fn severity_of(v: &Value) -> Option<Severity> {
    let n = match v {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse::<f64>().ok()?,
        _ => return None,
    };
    if n.fract() != 0.0 {
        return None;
    }
    Severity::new(n as i64).ok()
}

fn confidence_of(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => {
            let s = s.trim();
            match s.strip_suffix('%') {
                Some(p) => p.trim().parse::<f64>().ok().map(|x| x / 100.0),
                None => s.parse().ok(),
            }
        }
        _ => None,
    }
}

fn lookup<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

/// Scans every `{` for a JSON object. Objects carrying all three keys win;
/// otherwise the first with a valid severity and confidence is used and the
/// surrounding prose becomes the reasoning.
fn parse_json(raw: &str) -> Option<ParsedResponse> {
    let mut partial: Option<ParsedResponse> = None;
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        let Some(Ok(Value::Object(obj))) = stream.next() else {
            continue;
        };
        let end = start + stream.byte_offset();
        let Some(severity) = lookup(&obj, "severity").and_then(severity_of) else {
            continue;
        };
        let Some(conf) = lookup(&obj, "confidence").and_then(confidence_of) else {
            continue;
        };
        let (confidence, confidence_clamped) = clamp_unit(conf);
        match lookup(&obj, "reasoning") {
            Some(r) => {
                let reasoning = match r {
                    Value::String(s) => s.trim().to_string(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                return Some(ParsedResponse {
                    severity,
                    confidence,
                    reasoning,
                    confidence_clamped,
                    confidence_missing: false,
                });
            }
            None if partial.is_none() => {
                let prose = format!("{} {}", raw[..start].trim(), raw[end..].trim());
                partial = Some(ParsedResponse {
                    severity,
                    confidence,
                    reasoning: prose.trim().to_string(),
                    confidence_clamped,
                    confidence_missing: false,
                });
            }
            None => {}
        }
    }
    partial
}

fn parse_labeled(raw: &str) -> Option<ParsedResponse> {
    let severity = SEVERITY_RE.captures_iter(raw).find_map(|c| {
        let n: f64 = c[1].parse().ok()?;
        if n.fract() != 0.0 {
            return None;
        }
        Severity::new(n as i64).ok()
    })?;
    let conf = CONFIDENCE_RE.captures(raw).and_then(|c| {
        let v: f64 = c[1].parse().ok()?;
        Some(if c.get(2).is_some() { v / 100.0 } else { v })
    });
    let reasoning = match REASONING_RE.captures(raw) {
        Some(c) => c[1].trim().to_string(),
        None => {
            let stripped = SEVERITY_RE.replace_all(raw, "");
            let stripped = CONFIDENCE_RE.replace_all(&stripped, "");
            stripped
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ")
        }
    };
    let (confidence, confidence_clamped) = match conf {
        Some(c) => clamp_unit(c),
        None => (DEFAULT_CONFIDENCE, false),
    };
    Some(ParsedResponse {
        severity,
        confidence,
        reasoning,
        confidence_clamped,
        confidence_missing: conf.is_none(),
    })
}
