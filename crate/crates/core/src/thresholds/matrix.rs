//! Dense example × class score matrix and its binary file: one JSON header
//! line `{"classes": [...], "count": n}` (n = number of classes) followed by
//! records of `(u16 LE id length, UTF-8 example id, n × f32 LE)` until EOF.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ThresholdError;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<S> {
    example_ids: Vec<String>,
    class_ids: Vec<String>,
    /// Row-major, `example_ids.len() × class_ids.len()`.
    scores: Vec<S>,
}

impl<S: Scalar> ScoreMatrix<S> {
    pub fn new(
        example_ids: Vec<String>,
        class_ids: Vec<String>,
        scores: Vec<S>,
    ) -> Result<Self, ThresholdError> {
        let (rows, cols) = (example_ids.len(), class_ids.len());
        if rows * cols != scores.len() {
            return Err(ThresholdError::Shape { rows, cols, len: scores.len() });
        }
        for (kind, ids) in [("example", &example_ids), ("class", &class_ids)] {
            let mut seen = HashSet::new();
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(ThresholdError::Duplicate { kind, id: dup.clone() });
            }
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ThresholdError::NonFinite {
                example: example_ids[i / cols].clone(),
                class: class_ids[i % cols].clone(),
            });
        }
        Ok(ScoreMatrix { example_ids, class_ids, scores })
    }

    pub fn from_rows(
        class_ids: Vec<String>,
        rows: impl IntoIterator<Item = (String, Vec<S>)>,
    ) -> Result<Self, ThresholdError> {
        let mut example_ids = Vec::new();
        let mut scores = Vec::new();
        for (id, row) in rows {
            if row.len() != class_ids.len() {
                return Err(ThresholdError::Shape {
                    rows: 1,
                    cols: class_ids.len(),
                    len: row.len(),
                });
            }
            example_ids.push(id);
            scores.extend(row);
        }
        Self::new(example_ids, class_ids, scores)
    }

    pub fn example_ids(&self) -> &[String] {
        &self.example_ids
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn rows(&self) -> usize {
        self.example_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.class_ids.len()
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.scores[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.scores[i * self.cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.rows()).map(|i| self.get(i, j)).collect()
    }

    /// Row × class indicator of gold membership, aligned with this matrix.
    pub fn label_mask<L: AsRef<[String]>>(
        &self,
        labels: &HashMap<String, L>,
    ) -> Result<Vec<Vec<bool>>, ThresholdError> {
        let index: HashMap<&str, usize> =
            self.class_ids.iter().enumerate().map(|(j, c)| (c.as_str(), j)).collect();
        self.example_ids
            .iter()
            .map(|id| {
                let gold = labels.get(id).ok_or_else(|| ThresholdError::MissingLabels(id.clone()))?;
                let mut row = vec![false; self.cols()];
                for code in gold.as_ref() {
                    if let Some(&j) = index.get(code.as_str()) {
                        row[j] = true;
                    }
                }
                Ok(row)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreHeader {
    pub classes: Vec<String>,
    pub count: usize,
}

pub fn write_score_matrix<S: Scalar, W: Write>(
    mut w: W,
    m: &ScoreMatrix<S>,
) -> Result<(), ThresholdError> {
    let header = ScoreHeader { classes: m.class_ids.clone(), count: m.cols() };
    serde_json::to_writer(&mut w, &header).map_err(|e| ThresholdError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for (i, id) in m.example_ids.iter().enumerate() {
        let len = u16::try_from(id.len())
            .map_err(|_| ThresholdError::Format(format!("id too long: {} bytes", id.len())))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for s in m.row(i) {
            let v = s.to_f32().unwrap_or(f32::NAN);
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_score_matrix<S: Scalar, R: BufRead>(mut r: R) -> Result<ScoreMatrix<S>, ThresholdError> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: ScoreHeader =
        serde_json::from_slice(&line).map_err(|e| ThresholdError::Format(format!("header: {e}")))?;
    if header.count != header.classes.len() {
        return Err(ThresholdError::Format(format!(
            "header count {} but {} classes",
            header.count,
            header.classes.len()
        )));
    }
    let mut example_ids = Vec::new();
    let mut scores = Vec::new();
    let mut buf = vec![0u8; header.count * 4];
    loop {
        let mut len = [0u8; 2];
        if r.fill_buf()?.is_empty() {
            break;
        }
        let i = example_ids.len();
        let truncated = |e: std::io::Error| ThresholdError::Format(format!("record {i}: {e}"));
        r.read_exact(&mut len).map_err(truncated)?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut id).map_err(truncated)?;
        let id = String::from_utf8(id)
            .map_err(|_| ThresholdError::Format(format!("record {i}: id is not UTF-8")))?;
        r.read_exact(&mut buf).map_err(truncated)?;
        scores.extend(
            buf.chunks_exact(4)
                .map(|c| S::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)),
        );
        example_ids.push(id);
    }
    ScoreMatrix::new(example_ids, header.classes, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn validates_shape_and_values() {
        assert!(matches!(
            ScoreMatrix::new(ids(&["a"]), ids(&["x", "y"]), vec![0.1f64]),
            Err(ThresholdError::Shape { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(ids(&["a"]), ids(&["x"]), vec![f64::NAN]),
            Err(ThresholdError::NonFinite { .. })
        ));
        assert!(matches!(
            ScoreMatrix::new(ids(&["a", "a"]), ids(&["x"]), vec![0.0f64, 1.0]),
            Err(ThresholdError::Duplicate { kind: "example", .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let m = ScoreMatrix::new(
            ids(&["n1", "n2", "n3"]),
            ids(&["A00", "B01"]),
            vec![0.5f32, -2.25, 1e-3, 7.0, 0.0, 1.0],
        )
        .unwrap();
        let mut bytes = Vec::new();
        write_score_matrix(&mut bytes, &m).unwrap();
        assert_eq!(read_score_matrix::<f32, _>(&bytes[..]).unwrap(), m);
        let wide = read_score_matrix::<f64, _>(&bytes[..]).unwrap();
        assert_eq!(wide.get(1, 0), 1e-3f32 as f64);
        assert!(read_score_matrix::<f32, _>(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn label_mask_aligns_with_columns() {
        let m = ScoreMatrix::new(ids(&["n1", "n2"]), ids(&["A00", "B01"]), vec![0.0f64; 4]).unwrap();
        let labels: HashMap<String, Vec<String>> = [
            ("n1".to_owned(), ids(&["B01", "Z99"])),
            ("n2".to_owned(), ids(&[])),
        ]
        .into();
        assert_eq!(m.label_mask(&labels).unwrap(), vec![vec![false, true], vec![false, false]]);
        labels_missing(&m);
    }

    fn labels_missing(m: &ScoreMatrix<f64>) {
        let labels: HashMap<String, Vec<String>> = HashMap::new();
        assert!(matches!(m.label_mask(&labels), Err(ThresholdError::MissingLabels(_))));
    }
}
