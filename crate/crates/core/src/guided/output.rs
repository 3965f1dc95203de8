use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SchemaConfig, SchemaMode};

/// One model output with what could be recovered from it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationRecord {
    #[serde(default)]
    pub note_id: String,
    pub raw: String,
    pub descriptions: Vec<String>,
    pub reasoning: Option<String>,
    /// Parses as JSON and matches the expected object shape.
    pub valid_json: bool,
    /// Parses as JSON at all.
    pub parsable: bool,
    /// Number of diagnosis strings actually present.
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

/// Parse raw model output with the default schema limits.
pub fn parse_output(raw: &str, mode: SchemaMode) -> GenerationRecord {
    parse_output_with(raw, mode, &SchemaConfig::default())
}

/// Parse raw model output. Never fails: invalid output yields a record with
/// `valid_json = false` and whatever descriptions could be salvaged.
pub fn parse_output_with(raw: &str, mode: SchemaMode, cfg: &SchemaConfig) -> GenerationRecord {
    let mut rec = GenerationRecord {
        raw: raw.to_owned(),
        ..Default::default()
    };
    let Ok(value) = serde_json::from_str::<Value>(raw) else {
        return rec;
    };
    rec.parsable = true;
    let Value::Object(map) = value else {
        return rec;
    };

    let mut shape_ok = true;
    match map.get("diagnoses") {
        Some(Value::Array(items)) => {
            for item in items {
                match item {
                    Value::String(s) => {
                        let n = s.chars().count();
                        shape_ok &= n >= cfg.min_len && n <= cfg.max_len;
                        rec.descriptions.push(s.clone());
                    }
                    _ => shape_ok = false,
                }
            }
            rec.count = rec.descriptions.len();
            shape_ok &= items.len() == cfg.count;
        }
        _ => shape_ok = false,
    }
    match (mode, map.get("reasoning")) {
        (SchemaMode::Cot, Some(Value::String(r))) => {
            shape_ok &= r.chars().count() <= cfg.reasoning_max_len;
            rec.reasoning = Some(r.clone());
        }
        (SchemaMode::Cot, _) => shape_ok = false,
        (SchemaMode::Plain, Some(_)) => shape_ok = false,
        (SchemaMode::Plain, None) => {}
    }
    let expected_keys = match mode {
        SchemaMode::Plain => 1,
        SchemaMode::Cot => 2,
    };
    shape_ok &= map.len() == expected_keys;
    rec.valid_json = shape_ok;
    rec
}
