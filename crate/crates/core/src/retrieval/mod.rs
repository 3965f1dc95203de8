//! Similar-patient retrieval over the training split and the majority-voting
//! baseline built on top of it.

mod bm25;
mod dense;
mod heuristics;
mod vectors;
mod vote;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::Scalar;

pub use bm25::{Bm25Index, Bm25Params};
pub use dense::{cosine, DenseIndex};
pub use heuristics::{gold_heuristic, otsuka, random_retrieve};
pub use vectors::{read_vector_file, write_vector_file, VectorFile, VectorHeader};
pub use vote::majority_vote;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("vector has dimension {found}, index expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("k = {k} exceeds the {available} available documents")]
    KTooLarge { k: usize, available: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("unknown document id {0}")]
    UnknownId(String),
    #[error("bad vector file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Ranked neighbors of one query, best first. The query itself never appears.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult<S> {
    pub query_id: String,
    pub ranked: Vec<(String, S)>,
}

impl<S: Scalar> RetrievalResult<S> {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(id, _)| id.as_str())
    }
}

/// Descending score, then ascending id.
pub fn rank_order<S: Scalar>(a: &(String, S), b: &(String, S)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

pub(crate) fn top_k<S: Scalar>(
    query_id: &str,
    mut scored: Vec<(String, S)>,
    k: usize,
) -> RetrievalResult<S> {
    scored.retain(|(id, _)| id != query_id);
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    RetrievalResult {
        query_id: query_id.to_owned(),
        ranked: scored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_and_excludes_self() {
        let scored = vec![
            ("d".to_owned(), 1.0),
            ("q".to_owned(), 9.0),
            ("b".to_owned(), 2.0),
            ("a".to_owned(), 1.0),
            ("c".to_owned(), 2.0),
        ];
        let r = top_k("q", scored, 3);
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["b", "c", "a"]);
    }
}
