//! Resolve generated diagnosis descriptions to 3-character ICD categories.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{truncate_code, CodeTable, IcdVersion};
use crate::guided::GenerationRecord;
use crate::retrieval::{Bm25Index, DenseIndex, RetrievalError};
use crate::text::normalize_description;
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("no vector for description {0}")]
    MissingVector(String),
    #[error("strategy needs embedding vectors but none were supplied")]
    MissingEmbeddings,
    #[error("vector id {0:?} does not name an ICD code")]
    BadCodeVectorId(String),
    #[error("code table has no {0} entries")]
    EmptyCodeTable(IcdVersion),
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Lexical,
    Embedding,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strategy {
    #[default]
    ExactThenEmbedding,
    ExactThenLexical,
    EmbeddingOnly,
    LexicalOnly,
}

impl Strategy {
    pub fn needs_embeddings(self) -> bool {
        matches!(self, Strategy::ExactThenEmbedding | Strategy::EmbeddingOnly)
    }
}

impl FromStr for Strategy {
    type Err = MappingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exact-then-embedding" | "exact+embedding" => Ok(Strategy::ExactThenEmbedding),
            "exact-then-lexical" | "exact+lexical" => Ok(Strategy::ExactThenLexical),
            "embedding" | "embedding-only" => Ok(Strategy::EmbeddingOnly),
            "lexical" | "lexical-only" | "bm25" => Ok(Strategy::LexicalOnly),
            _ => Err(MappingError::UnknownStrategy(s.to_owned())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::ExactThenEmbedding => "exact-then-embedding",
            Strategy::ExactThenLexical => "exact-then-lexical",
            Strategy::EmbeddingOnly => "embedding-only",
            Strategy::LexicalOnly => "lexical-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedItem {
    /// `None` for discarded descriptions.
    pub code: Option<String>,
    pub prov: Provenance,
    pub text: String,
    pub score: f64,
}

/// Per-description provenance counts, taken before deduplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProvenanceTally {
    pub exact: usize,
    pub lexical: usize,
    pub embedding: usize,
    pub discarded: usize,
}

impl ProvenanceTally {
    pub fn total(&self) -> usize {
        self.exact + self.lexical + self.embedding + self.discarded
    }

    fn add(&mut self, p: Provenance) {
        match p {
            Provenance::Exact => self.exact += 1,
            Provenance::Lexical => self.lexical += 1,
            Provenance::Embedding => self.embedding += 1,
            Provenance::Discarded => self.discarded += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedPrediction {
    pub note_id: String,
    pub items: Vec<MappedItem>,
    #[serde(default)]
    pub tally: ProvenanceTally,
}

impl MappedPrediction {
    /// Resolved codes in generation order.
    pub fn codes(&self) -> Vec<String> {
        self.items.iter().filter_map(|i| i.code.clone()).collect()
    }
}

/// Exact and lexical lookup structures over one ICD version of a code table.
/// Every short and long description is a candidate; the winner's full code is
/// truncated afterwards.
pub struct CodeMatcher {
    exact: HashMap<String, String>,
    lexical: Bm25Index<f64>,
    lexical_codes: HashMap<String, String>,
}

impl CodeMatcher {
    pub fn new(table: &CodeTable, version: IcdVersion) -> Result<Self, MappingError> {
        let mut exact = HashMap::new();
        let mut docs = Vec::new();
        let mut lexical_codes = HashMap::new();
        for e in table.entries().iter().filter(|e| e.version == version) {
            for (tag, desc) in [("s", &e.short_desc), ("l", &e.long_desc)] {
                if desc.trim().is_empty() {
                    continue;
                }
                exact
                    .entry(normalize_description(desc))
                    .or_insert_with(|| e.short_code.clone());
                let id = format!("{}#{tag}", e.full_code);
                lexical_codes.insert(id.clone(), e.short_code.clone());
                docs.push((id, desc.clone()));
            }
        }
        if docs.is_empty() {
            return Err(MappingError::EmptyCodeTable(version));
        }
        Ok(CodeMatcher {
            exact,
            lexical: Bm25Index::build(docs)?,
            lexical_codes,
        })
    }

    /// Case-insensitive, whitespace-normalized equality with a short or long
    /// description.
    pub fn map_exact(&self, description: &str) -> Option<String> {
        self.exact.get(&normalize_description(description)).cloned()
    }

    /// Best BM25 match among code descriptions; `None` when the description
    /// shares no term with any of them.
    pub fn map_lexical(&self, description: &str) -> Option<(String, f64)> {
        self.lexical
            .hits(description)
            .into_iter()
            .min_by(crate::retrieval::rank_order)
            .map(|(id, score)| (self.lexical_codes[&id].clone(), score))
    }
}

/// Code id of a description vector: `I10`, `I10#s` or `I10#l`.
pub fn code_of_vector_id(id: &str) -> Result<String, MappingError> {
    let code = id.split('#').next().unwrap_or(id);
    truncate_code(code).map_err(|_| MappingError::BadCodeVectorId(id.to_owned()))
}

/// Nearest code description by cosine similarity. Never discards.
pub fn map_embedding<S: Scalar>(
    description_vec: &[S],
    code_index: &DenseIndex<S>,
) -> Result<(String, S), MappingError> {
    let best = code_index
        .cosine_all(description_vec)?
        .into_iter()
        .min_by(crate::retrieval::rank_order)
        .ok_or(RetrievalError::EmptyCorpus)?;
    Ok((code_of_vector_id(&best.0)?, best.1))
}

/// Vectors for embedding-based mapping. Description vectors are looked up by
/// `"{note_id}#{index}"`.
pub struct EmbeddingContext<'a, S> {
    pub descriptions: &'a DenseIndex<S>,
    pub codes: &'a DenseIndex<S>,
}

pub fn description_vector_id(note_id: &str, index: usize) -> String {
    format!("{note_id}#{index}")
}

/// Map every description of a record, then drop repeated codes keeping the
/// first occurrence. Discarded descriptions stay in the list with no code.
pub fn map_all<S: Scalar>(
    record: &GenerationRecord,
    strategy: Strategy,
    matcher: &CodeMatcher,
    embeddings: Option<&EmbeddingContext<'_, S>>,
) -> Result<MappedPrediction, MappingError> {
    if strategy.needs_embeddings() && embeddings.is_none() {
        return Err(MappingError::MissingEmbeddings);
    }
    let mut items = Vec::new();
    let mut tally = ProvenanceTally::default();
    let mut seen = HashSet::new();
    for (i, text) in record.descriptions.iter().enumerate() {
        let exact = match strategy {
            Strategy::ExactThenEmbedding | Strategy::ExactThenLexical => matcher.map_exact(text),
            _ => None,
        };
        let (code, prov, score) = if let Some(code) = exact {
            (Some(code), Provenance::Exact, 1.0)
        } else {
            match strategy {
                Strategy::ExactThenLexical | Strategy::LexicalOnly => match matcher.map_lexical(text) {
                    Some((c, s)) => (Some(c), Provenance::Lexical, s),
                    None => (None, Provenance::Discarded, 0.0),
                },
                Strategy::ExactThenEmbedding | Strategy::EmbeddingOnly => {
                    let ctx = embeddings.ok_or(MappingError::MissingEmbeddings)?;
                    let id = description_vector_id(&record.note_id, i);
                    let v = ctx
                        .descriptions
                        .vector(&id)
                        .ok_or(MappingError::MissingVector(id))?;
                    let (c, s) = map_embedding(v, ctx.codes)?;
                    (Some(c), Provenance::Embedding, s.to_f64_lossy())
                }
            }
        };
        tally.add(prov);
        if let Some(c) = &code {
            if !seen.insert(c.clone()) {
                continue;
            }
        }
        items.push(MappedItem {
            code,
            prov,
            text: text.clone(),
            score,
        });
    }
    Ok(MappedPrediction {
        note_id: record.note_id.clone(),
        items,
        tally,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IcdEntry;

    fn table() -> CodeTable {
        let e = |c: &str, s: &str, l: &str| IcdEntry::new(c, IcdVersion::Icd10, s, l).unwrap();
        CodeTable::new(vec![
            e("I10", "Essential hypertension", "Essential (primary) hypertension"),
            e("I95.9", "Hypotension", "Hypotension, unspecified"),
            e("E11.9", "Type 2 diabetes", "Type 2 diabetes mellitus without complications"),
            e("J18.9", "Pneumonia", "Pneumonia, unspecified organism"),
            e("N17.9", "Acute kidney failure", "Acute kidney failure, unspecified"),
        ])
        .unwrap()
    }

    fn record(descs: &[&str]) -> GenerationRecord {
        GenerationRecord {
            note_id: "n1".into(),
            descriptions: descs.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn exact_matching() {
        let m = CodeMatcher::new(&table(), IcdVersion::Icd10).unwrap();
        assert_eq!(m.map_exact("ESSENTIAL hypertension").as_deref(), Some("I10"));
        assert_eq!(
            m.map_exact("Type 2  diabetes mellitus   without complications").as_deref(),
            Some("E11")
        );
        assert_eq!(m.map_exact("Hypotension.").as_deref(), Some("I95"));
        assert_eq!(m.map_exact("diagnosis 1"), None);
    }

    #[test]
    fn lexical_matching() {
        let m = CodeMatcher::new(&table(), IcdVersion::Icd10).unwrap();
        assert_eq!(m.map_lexical("zebra xylophone"), None);
        assert_eq!(m.map_lexical("kidney failure acute").unwrap().0, "N17");
        let (code, top) = m.map_lexical("Pneumonia").unwrap();
        assert_eq!(code, "J18");
        assert!(top > 0.0);
    }

    #[test]
    fn duplicates_collapse_and_discards_are_kept() {
        let m = CodeMatcher::new(&table(), IcdVersion::Icd10).unwrap();
        let r = record(&["Hypotension", "Hypotension", "zzz qqq", "hypotension, unspecified", "sepsis"]);
        let p = map_all::<f64>(&r, Strategy::ExactThenLexical, &m, None).unwrap();
        assert_eq!(p.codes(), vec!["I95"]);
        assert_eq!(p.items.iter().filter(|i| i.prov == Provenance::Discarded).count(), 2);
        assert_eq!(p.tally, ProvenanceTally { exact: 3, lexical: 0, embedding: 0, discarded: 2 });
        assert_eq!(p.tally.total(), r.descriptions.len());
    }

    #[test]
    fn embedding_strategy() {
        let m = CodeMatcher::new(&table(), IcdVersion::Icd10).unwrap();
        let codes = DenseIndex::new(
            2,
            false,
            [("I10#s".to_owned(), vec![1.0, 0.0]), ("J18.9#l".to_owned(), vec![0.0, 1.0])],
        )
        .unwrap();
        let descs = DenseIndex::new(
            2,
            false,
            [("n1#0".to_owned(), vec![0.1, 0.9]), ("n1#1".to_owned(), vec![0.0, 0.0])],
        )
        .unwrap();
        let ctx = EmbeddingContext { descriptions: &descs, codes: &codes };
        let p = map_all(&record(&["lung infection", "Essential hypertension"]), Strategy::ExactThenEmbedding, &m, Some(&ctx)).unwrap();
        assert_eq!(p.codes(), vec!["J18", "I10"]);
        assert_eq!(p.items[1].prov, Provenance::Exact);
        // exact match never consults the (zero) vector; embedding-only does
        assert!(matches!(
            map_all(&record(&["lung infection", "Essential hypertension"]), Strategy::EmbeddingOnly, &m, Some(&ctx)),
            Err(MappingError::Retrieval(RetrievalError::InvalidVector(_)))
        ));
        assert!(matches!(
            map_all::<f64>(&record(&["x"]), Strategy::EmbeddingOnly, &m, None),
            Err(MappingError::MissingEmbeddings)
        ));
        let (c, cos) = map_embedding(&[2.0, 0.0], &codes).unwrap();
        assert_eq!((c.as_str(), cos), ("I10", 1.0));
    }

    #[test]
    fn strategy_parsing() {
        for s in [Strategy::ExactThenEmbedding, Strategy::ExactThenLexical, Strategy::EmbeddingOnly, Strategy::LexicalOnly] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("nope".parse::<Strategy>().is_err());
    }
}
