use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{CorpusError, DatasetSplit, LabeledNote, TertileThresholds};
use crate::text::whitespace_token_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub notes: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub full_codes: usize,
    pub short_codes: usize,
    pub registry_codes: usize,
    pub avg_codes_per_note: f64,
    pub avg_tokens_per_note: f64,
    pub tertile_thresholds: TertileThresholds,
}

/// Statistics over every note referenced by the split, counting tokens by
/// whitespace.
pub fn corpus_stats(split: &DatasetSplit, notes: &[LabeledNote]) -> Result<CorpusStats, CorpusError> {
    corpus_stats_with(split, notes, whitespace_token_count)
}

/// Same as [`corpus_stats`] with a caller-supplied token counter, e.g. a
/// subword tokenizer.
pub fn corpus_stats_with<F>(
    split: &DatasetSplit,
    notes: &[LabeledNote],
    count_tokens: F,
) -> Result<CorpusStats, CorpusError>
where
    F: Fn(&str) -> usize,
{
    let by_id: HashMap<&str, &LabeledNote> = notes.iter().map(|n| (n.id(), n)).collect();
    let mut full = BTreeSet::new();
    let mut short = BTreeSet::new();
    let mut codes = 0usize;
    let mut tokens = 0usize;
    let mut count = 0usize;
    for id in split.all_ids() {
        let note = by_id
            .get(id.as_str())
            .ok_or_else(|| CorpusError::UnknownNoteId(id.clone()))?;
        count += 1;
        codes += note.labels.len();
        tokens += count_tokens(&note.note.full_text());
        full.extend(note.full_labels.iter().map(String::as_str));
        short.extend(note.labels.iter().map(String::as_str));
    }
    let avg = |x: usize| if count == 0 { 0.0 } else { x as f64 / count as f64 };
    Ok(CorpusStats {
        notes: count,
        train: split.train_ids.len(),
        val: split.val_ids.len(),
        test: split.test_ids.len(),
        full_codes: full.len(),
        short_codes: short.len(),
        registry_codes: split.label_registry.len(),
        avg_codes_per_note: avg(codes),
        avg_tokens_per_note: avg(tokens),
        tertile_thresholds: split.tertile_thresholds,
    })
}
