use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::Path;

use serde::Deserialize;

use super::InferenceError;
use crate::guided::{parse_output_with, GenerationRecord, SchemaConfig, SchemaMode};

#[derive(Deserialize)]
struct RawLine {
    note_id: String,
    raw: String,
}

/// Streams `{"note_id": ..., "raw": ...}` lines through the output parser.
pub struct ReplayReader<R> {
    lines: Lines<R>,
    line_no: usize,
    mode: SchemaMode,
    schema: SchemaConfig,
}

impl<R: BufRead> ReplayReader<R> {
    pub fn new(reader: R, mode: SchemaMode, schema: SchemaConfig) -> Self {
        ReplayReader {
            lines: reader.lines(),
            line_no: 0,
            mode,
            schema,
        }
    }
}

impl<R: BufRead> Iterator for ReplayReader<R> {
    type Item = Result<GenerationRecord, InferenceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RawLine = match serde_json::from_str(&line) {
                Ok(p) => p,
                Err(e) => {
                    return Some(Err(InferenceError::MalformedRecord {
                        line: self.line_no,
                        message: e.to_string(),
                    }))
                }
            };
            let mut record = parse_output_with(&parsed.raw, self.mode, &self.schema);
            record.note_id = parsed.note_id;
            return Some(Ok(record));
        }
    }
}

pub fn replay(
    path: &Path,
    mode: SchemaMode,
    schema: SchemaConfig,
) -> Result<ReplayReader<BufReader<File>>, InferenceError> {
    Ok(ReplayReader::new(BufReader::new(File::open(path)?), mode, schema))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lines(text: &str) -> Vec<Result<GenerationRecord, InferenceError>> {
        ReplayReader::new(text.as_bytes(), SchemaMode::Plain, SchemaConfig::default()).collect()
    }

    #[test]
    fn empty_input() {
        assert!(lines("").is_empty());
        assert!(lines("\n\n").is_empty());
    }

    #[test]
    fn valid_guided_output() {
        let raw = format!("{{\"diagnoses\":[{}]}}", vec!["\"abc\""; 20].join(","));
        let line = serde_json::json!({"note_id": "n1", "raw": raw}).to_string();
        let out = lines(&line);
        let r = out[0].as_ref().unwrap();
        assert!(r.valid_json);
        assert_eq!(r.note_id, "n1");
    }

    #[test]
    fn malformed_line_reported() {
        let out = lines("{\"note_id\":\"a\",\"raw\":\"x\"}\n{oops}\n");
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(InferenceError::MalformedRecord { line: 2, .. })));
    }
}
