use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::guided::GenerationRecord;
use crate::mapping::{MappedPrediction, Provenance};
use crate::Scalar;

/// Output-quality figures for generative runs. Accuracies are the share of
/// mapped items (after deduplication) whose code is in gold; `None` when no
/// item has that provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationDiagnostics<S> {
    pub records: usize,
    pub valid_json_rate: S,
    pub parsable_rate: S,
    pub avg_descriptions: S,
    pub avg_codes_after_dedup: S,
    pub exact_accuracy: Option<S>,
    pub lexical_accuracy: Option<S>,
    pub embedding_accuracy: Option<S>,
    /// Lexical and embedding items together.
    pub fallback_accuracy: Option<S>,
    /// Exact matches among all descriptions, before deduplication.
    pub exact_share: S,
    /// Discarded descriptions among all descriptions, before deduplication.
    pub discard_rate_pre_dedup: S,
    /// Discarded items among items kept after deduplication.
    pub discard_rate_post_dedup: S,
}

pub fn generation_diagnostics<S: Scalar, L: AsRef<[String]>>(
    records: &[GenerationRecord],
    mapped: &[MappedPrediction],
    gold: &HashMap<String, L>,
) -> Result<GenerationDiagnostics<S>, MetricsError> {
    let rec_ids: HashSet<&str> = records.iter().map(|r| r.note_id.as_str()).collect();
    let map_ids: HashSet<&str> = mapped.iter().map(|m| m.note_id.as_str()).collect();
    if rec_ids != map_ids || rec_ids.len() != records.len() || map_ids.len() != mapped.len() {
        return Err(MetricsError::IdMismatch("records and mapped predictions are not aligned".into()));
    }
    let mut hits: HashMap<Provenance, (usize, usize)> = HashMap::new();
    let (mut codes, mut items, mut discarded_items) = (0, 0, 0);
    let (mut descriptions, mut exact_desc, mut discarded_desc) = (0, 0, 0);
    for m in mapped {
        let g: HashSet<&str> = gold
            .get(&m.note_id)
            .ok_or_else(|| MetricsError::IdMismatch(format!("{} has no gold labels", m.note_id)))?
            .as_ref()
            .iter()
            .map(String::as_str)
            .collect();
        for it in &m.items {
            items += 1;
            match &it.code {
                Some(c) => {
                    codes += 1;
                    let e = hits.entry(it.prov).or_default();
                    e.0 += g.contains(c.as_str()) as usize;
                    e.1 += 1;
                }
                None => discarded_items += 1,
            }
        }
        descriptions += m.tally.total();
        exact_desc += m.tally.exact;
        discarded_desc += m.tally.discarded;
    }
    let acc = |ps: &[Provenance]| {
        let (h, n) = ps.iter().filter_map(|p| hits.get(p)).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        (n > 0).then(|| S::ratio(h, n))
    };
    let n = records.len();
    Ok(GenerationDiagnostics {
        records: n,
        valid_json_rate: S::ratio(records.iter().filter(|r| r.valid_json).count(), n),
        parsable_rate: S::ratio(records.iter().filter(|r| r.parsable).count(), n),
        avg_descriptions: S::ratio(records.iter().map(|r| r.descriptions.len()).sum(), n),
        avg_codes_after_dedup: S::ratio(codes, n),
        exact_accuracy: acc(&[Provenance::Exact]),
        lexical_accuracy: acc(&[Provenance::Lexical]),
        embedding_accuracy: acc(&[Provenance::Embedding]),
        fallback_accuracy: acc(&[Provenance::Lexical, Provenance::Embedding]),
        exact_share: S::ratio(exact_desc, descriptions),
        discard_rate_pre_dedup: S::ratio(discarded_desc, descriptions),
        discard_rate_post_dedup: S::ratio(discarded_items, items),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{MappedItem, ProvenanceTally};

    fn item(code: Option<&str>, prov: Provenance) -> MappedItem {
        MappedItem { code: code.map(str::to_owned), prov, text: String::new(), score: 1.0 }
    }

    #[test]
    fn provenance_accuracies() {
        let records = vec![GenerationRecord { note_id: "a".into(), valid_json: true, parsable: true, ..Default::default() }];
        let mapped = vec![MappedPrediction {
            note_id: "a".into(),
            items: vec![
                item(Some("X"), Provenance::Exact),
                item(Some("Y"), Provenance::Exact),
                item(Some("Z"), Provenance::Embedding),
                item(Some("W"), Provenance::Embedding),
                item(None, Provenance::Discarded),
            ],
            tally: ProvenanceTally { exact: 3, lexical: 0, embedding: 2, discarded: 1 },
        }];
        let gold: HashMap<String, Vec<String>> = [("a".to_owned(), vec!["X".to_owned(), "Z".to_owned()])].into();
        let d = generation_diagnostics::<f64, _>(&records, &mapped, &gold).unwrap();
        assert_eq!(d.exact_accuracy, Some(0.5));
        assert_eq!(d.embedding_accuracy, Some(0.5));
        assert_eq!(d.lexical_accuracy, None);
        assert_eq!(d.valid_json_rate, 1.0);
        assert_eq!(d.avg_codes_after_dedup, 4.0);
        assert_eq!(d.exact_share, 0.5);
        assert_eq!(d.discard_rate_pre_dedup, 1.0 / 6.0);
        assert_eq!(d.discard_rate_post_dedup, 0.2);
        assert!(generation_diagnostics::<f64, _>(&records, &[], &gold).is_err());
    }
}
