//! Accident records, the domain feature registry, per-agent projection and
//! the textual feature block used in agent prompts.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::types::{AgentId, Severity};

/// A single feature value. Non-finite numerics are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    Categorical(String),
    Numeric {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Missing,
}

impl FeatureValue {
    pub fn categorical(label: impl Into<String>) -> Self {
        FeatureValue::Categorical(label.into())
    }

    /// Numeric value without a unit. NaN and infinities become `Missing`.
    pub fn numeric(value: f64) -> Self {
        if value.is_finite() {
            FeatureValue::Numeric { value, unit: None }
        } else {
            FeatureValue::Missing
        }
    }

    pub fn with_unit(value: f64, unit: impl Into<String>) -> Self {
        if value.is_finite() {
            FeatureValue::Numeric {
                value,
                unit: Some(unit.into()),
            }
        } else {
            FeatureValue::Missing
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            FeatureValue::Categorical(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Categorical(s) => f.write_str(s),
            FeatureValue::Numeric { value, unit: None } => write!(f, "{value}"),
            FeatureValue::Numeric {
                value,
                unit: Some(unit),
            } => {
                let unit = display_unit(unit);
                if unit == "%" || unit.starts_with('°') {
                    write!(f, "{value}{unit}")
                } else {
                    write!(f, "{value} {unit}")
                }
            }
            FeatureValue::Missing => f.write_str("unknown"),
        }
    }
}

/// Expands common unit abbreviations; anything else passes through verbatim.
fn display_unit(tag: &str) -> &str {
    match tag {
        "mi" => "miles",
        "km" => "kilometers",
        "m" => "meters",
        "ft" => "feet",
        "F" | "degF" => "°F",
        "C" | "degC" => "°C",
        "pct" => "%",
        other => other,
    }
}

/// Ordered feature map. Order is meaningful: prompts list features in it.
pub type FeatureMap = IndexMap<String, FeatureValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccidentRecord {
    pub id: String,
    pub features: FeatureMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Severity>,
}

impl AccidentRecord {
    pub fn new(id: impl Into<String>) -> Self {
        AccidentRecord {
            id: id.into(),
            features: FeatureMap::new(),
            label: None,
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: FeatureValue) -> Self {
        self.features.insert(name.into(), value);
        self
    }

    pub fn labeled(mut self, label: Severity) -> Self {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical,
    Numeric,
    /// Numeric when the cell parses as a finite number, categorical otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    /// Language-model domains receiving this feature. Empty means ML-only.
    #[serde(default)]
    pub domains: Vec<AgentId>,
    #[serde(default)]
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl FeatureSpec {
    fn new(name: &str, domain: AgentId, kind: FeatureKind, unit: Option<&str>) -> Self {
        FeatureSpec {
            name: name.to_string(),
            domains: vec![domain],
            kind,
            unit: unit.map(str::to_string),
        }
    }

    pub fn is_ml_only(&self) -> bool {
        self.domains.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("registry: {0}")]
pub struct RegistryError(pub String);

/// Assignment of features to language-model domains, in declaration order.
/// The ML agent always sees every feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRegistry {
    specs: Vec<FeatureSpec>,
    index: HashMap<String, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default = "yes")]
    extends_default: bool,
    features: Vec<FeatureSpec>,
}

fn yes() -> bool {
    true
}

impl FeatureRegistry {
    pub fn new(specs: Vec<FeatureSpec>) -> Result<Self, RegistryError> {
        let mut index = HashMap::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if spec.name.trim().is_empty() {
                return Err(RegistryError("feature with empty name".into()));
            }
            if spec.domains.contains(&AgentId::Ml) {
                return Err(RegistryError(format!(
                    "{}: ML is not a domain; leave domains empty for ML-only features",
                    spec.name
                )));
            }
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(RegistryError(format!("duplicate feature {}", spec.name)));
            }
        }
        Ok(FeatureRegistry { specs, index })
    }

    /// Reads a registry JSON file. With `extends_default` (the default),
    /// listed features replace same-named defaults and new ones are appended.
    pub fn from_json_str(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| RegistryError(e.to_string()))?;
        if !file.extends_default {
            return Self::new(file.features);
        }
        let mut specs = Self::default().specs;
        for spec in file.features {
            match specs.iter_mut().find(|s| s.name == spec.name) {
                Some(slot) => *slot = spec,
                None => specs.push(spec),
            }
        }
        Self::new(specs)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RegistryError(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.index.get(name).map(|&i| &self.specs[i])
    }

    /// Features assigned to `agent`, in declaration order.
    pub fn domain_features(&self, agent: AgentId) -> impl Iterator<Item = &FeatureSpec> {
        self.specs.iter().filter(move |s| s.domains.contains(&agent))
    }
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        use AgentId::*;
        use FeatureKind::*;
        let specs = vec![
            FeatureSpec::new("Weather Conditions", Environmental, Categorical, None),
            FeatureSpec::new("Light Conditions", Environmental, Categorical, None),
            FeatureSpec::new("Visibility", Environmental, Numeric, Some("mi")),
            FeatureSpec::new("Temperature", Environmental, Numeric, Some("F")),
            FeatureSpec::new("Wind Speed", Environmental, Numeric, Some("mph")),
            FeatureSpec::new("Humidity", Environmental, Numeric, Some("%")),
            FeatureSpec::new("Day of Week", Temporal, Categorical, None),
            FeatureSpec::new("Time of Day", Temporal, Categorical, None),
            FeatureSpec::new("Month", Temporal, Categorical, None),
            FeatureSpec::new("Weekend/Holiday", Temporal, Categorical, None),
            FeatureSpec::new("Day of Year", Temporal, Numeric, None),
            FeatureSpec::new("Part of Day", Temporal, Categorical, None),
            FeatureSpec::new("Road Type", Infrastructural, Categorical, None),
            FeatureSpec::new("Junction Detail", Infrastructural, Categorical, None),
            FeatureSpec::new("Speed Limit", Infrastructural, Numeric, Some("mph")),
            FeatureSpec::new("Road Surface", Infrastructural, Categorical, None),
            FeatureSpec::new("Special Conditions", Infrastructural, Categorical, None),
            FeatureSpec::new("Carriageway Hazards", Infrastructural, Categorical, None),
            FeatureSpec::new("Point of Impact", Spatial, Categorical, None),
            FeatureSpec::new("Travel Distance", Spatial, Numeric, None),
            FeatureSpec::new("Vehicle Manoeuvres", Spatial, Categorical, None),
            FeatureSpec::new("Longitude", Spatial, Numeric, None),
            FeatureSpec::new("Latitude", Spatial, Numeric, None),
            FeatureSpec::new("Spatial Extent", Spatial, Numeric, None),
        ];
        FeatureRegistry::new(specs).expect("default registry is valid")
    }
}

/// Selects the features an agent reasons over. The ML agent receives the
/// full map; language-model agents receive their registry domain, in
/// registry order, skipping features the record does not carry.
pub fn project(record: &AccidentRecord, agent: AgentId, registry: &FeatureRegistry) -> FeatureMap {
    if agent == AgentId::Ml {
        return record.features.clone();
    }
    registry
        .domain_features(agent)
        .filter_map(|spec| {
            record
                .features
                .get(&spec.name)
                .map(|v| (spec.name.clone(), v.clone()))
        })
        .collect()
}

/// Renders one `Name: value` line per feature, in map order.
pub fn format_features(subset: &FeatureMap) -> String {
    let mut out = String::new();
    for (i, (name, value)) in subset.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(name);
        out.push_str(": ");
        out.push_str(&value.to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    /// One-based data row number (the header is not counted).
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("{count} bad rows exceed the budget of {budget}; first: {first}")]
    TooManyBadRows {
        count: usize,
        budget: usize,
        first: RowError,
    },
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub bad_row_budget: usize,
    pub label_column: String,
    pub id_column: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            bad_row_budget: 1000,
            label_column: "severity".into(),
            id_column: "id".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub records: Vec<AccidentRecord>,
    pub row_errors: Vec<RowError>,
}

const MISSING_TOKENS: [&str; 8] = ["", "na", "n/a", "nan", "null", "none", "?", "unknown"];

fn is_missing_token(s: &str) -> bool {
    let lower = s.to_ascii_lowercase();
    MISSING_TOKENS.contains(&lower.as_str())
}

fn parse_cell(raw: &str, spec: Option<&FeatureSpec>) -> FeatureValue {
    let raw = raw.trim();
    if is_missing_token(raw) {
        return FeatureValue::Missing;
    }
    let kind = spec.map(|s| s.kind).unwrap_or_default();
    let unit = spec.and_then(|s| s.unit.clone());
    let as_num = || raw.parse::<f64>().ok().filter(|v| v.is_finite());
    match kind {
        FeatureKind::Categorical => FeatureValue::Categorical(raw.to_string()),
        FeatureKind::Numeric => match as_num() {
            Some(value) => FeatureValue::Numeric { value, unit },
            None => FeatureValue::Missing,
        },
        FeatureKind::Auto => match as_num() {
            Some(value) => FeatureValue::Numeric { value, unit },
            None => FeatureValue::Categorical(raw.to_string()),
        },
    }
}

pub fn ingest_csv(
    path: impl AsRef<Path>,
    registry: &FeatureRegistry,
    opts: &IngestOptions,
) -> Result<Ingested, IngestError> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(file, registry, opts)
}

/// Parses UTF-8 comma-separated records with a header row.
pub fn ingest_reader<R: Read>(
    reader: R,
    registry: &FeatureRegistry,
    opts: &IngestOptions,
) -> Result<Ingested, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_error(e)),
    };
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(IngestError::Schema("missing header row".into()));
    }
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for n in &names {
        if n.is_empty() {
            return Err(IngestError::Schema("empty column name in header".into()));
        }
        if !seen.insert(n.as_str()) {
            return Err(IngestError::Schema(format!("duplicate column `{n}`")));
        }
    }
    let label_col = names
        .iter()
        .position(|n| n.eq_ignore_ascii_case(&opts.label_column));
    let id_col = names
        .iter()
        .position(|n| n.eq_ignore_ascii_case(&opts.id_column));

    let mut out = Ingested::default();
    let mut ids = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                if e.is_io_error() {
                    return Err(csv_error(e));
                }
                push_row_error(&mut out, opts, row_no, format!("malformed row: {e}"))?;
                continue;
            }
        };
        if row.len() != names.len() {
            push_row_error(
                &mut out,
                opts,
                row_no,
                format!("expected {} fields, found {}", names.len(), row.len()),
            )?;
            continue;
        }
        let label = match label_col.map(|c| row[c].trim()) {
            None | Some("") => None,
            Some(text) => match text.parse::<Severity>() {
                Ok(s) => Some(s),
                Err(_) => {
                    let msg = if text.parse::<f64>().is_ok() {
                        "label out of range".to_string()
                    } else {
                        format!("invalid label `{text}`")
                    };
                    push_row_error(&mut out, opts, row_no, msg)?;
                    continue;
                }
            },
        };
        let id = match id_col.map(|c| row[c].trim()) {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => format!("row-{row_no}"),
        };
        if !ids.insert(id.clone()) {
            push_row_error(&mut out, opts, row_no, format!("duplicate id `{id}`"))?;
            continue;
        }
        let mut features = FeatureMap::with_capacity(names.len());
        for (c, name) in names.iter().enumerate() {
            if Some(c) == label_col || Some(c) == id_col {
                continue;
            }
            features.insert(name.clone(), parse_cell(&row[c], registry.get(name)));
        }
        out.records.push(AccidentRecord {
            id,
            features,
            label,
        });
    }
    Ok(out)
}

fn push_row_error(
    out: &mut Ingested,
    opts: &IngestOptions,
    row: usize,
    message: String,
) -> Result<(), IngestError> {
    out.row_errors.push(RowError { row, message });
    if out.row_errors.len() > opts.bad_row_budget {
        return Err(IngestError::TooManyBadRows {
            count: out.row_errors.len(),
            budget: opts.bad_row_budget,
            first: out.row_errors[0].clone(),
        });
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> IngestError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::Io(io),
            other => IngestError::Schema(format!("{other:?}")),
        }
    } else {
        IngestError::Schema(e.to_string())
    }
}
