use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{top_k, RetrievalError, RetrievalResult};
use crate::text::lexical_tokens;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<S> {
    pub k1: S,
    pub b: S,
}

impl<S: Scalar> Default for Bm25Params<S> {
    fn default() -> Self {
        Bm25Params {
            k1: S::lit(1.2),
            b: S::lit(0.75),
        }
    }
}

/// Okapi BM25 over lowercased alphanumeric tokens.
///
/// Documents are stored in ascending id order, so posting lists (which hold
/// document positions) are sorted by id as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar + Serialize + DeserializeOwned")]
pub struct Bm25Index<S> {
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    avg_doc_len: S,
    doc_freq: BTreeMap<String, usize>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    params: Bm25Params<S>,
}

impl<S: Scalar> Bm25Index<S> {
    pub fn build<I, D, T>(docs: I) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (D, T)>,
        D: Into<String>,
        T: AsRef<str>,
    {
        Self::with_params(docs, Bm25Params::default())
    }

    pub fn with_params<I, D, T>(docs: I, params: Bm25Params<S>) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (D, T)>,
        D: Into<String>,
        T: AsRef<str>,
    {
        if !(params.k1 > S::zero()) || params.b < S::zero() || params.b > S::one() {
            return Err(RetrievalError::InvalidParams(
                "BM25 needs k1 > 0 and 0 <= b <= 1".into(),
            ));
        }
        let mut docs: Vec<(String, Vec<String>)> = docs
            .into_iter()
            .map(|(id, text)| (id.into(), lexical_tokens(text.as_ref())))
            .collect();
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(RetrievalError::DuplicateId(w[0].0.clone()));
        }

        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (pos, (_, tokens)) in docs.iter().enumerate() {
            doc_len.push(tokens.len());
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings
                    .entry(term.to_owned())
                    .or_default()
                    .push((pos as u32, count));
            }
        }
        let doc_freq = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        let total: usize = doc_len.iter().sum();
        Ok(Bm25Index {
            avg_doc_len: S::from_count(total) / S::from_count(docs.len()),
            doc_ids: docs.into_iter().map(|(id, _)| id).collect(),
            doc_len,
            doc_freq,
            postings,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn params(&self) -> Bm25Params<S> {
        self.params
    }

    pub fn avg_doc_len(&self) -> S {
        self.avg_doc_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.position(doc_id).map(|p| self.doc_len[p])
    }

    pub fn postings(&self, term: &str) -> &[(u32, u32)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    fn position(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids
            .binary_search_by(|d| d.as_str().cmp(doc_id))
            .ok()
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, never negative.
    pub fn idf(&self, term: &str) -> S {
        let n = S::from_count(self.len());
        let df = S::from_count(self.doc_freq(term));
        let half = S::lit(0.5);
        ((n - df + half) / (df + half) + S::one()).ln()
    }

    /// Accumulate scores per document position. Each distinct query term
    /// contributes once regardless of how often it occurs in the query; terms
    /// are summed in sorted order so equal documents tie bit for bit.
    fn accumulate(&self, query: &str) -> Vec<Option<S>> {
        let Bm25Params { k1, b } = self.params;
        let mut acc: Vec<Option<S>> = vec![None; self.len()];
        let terms: BTreeSet<String> = lexical_tokens(query).into_iter().collect();
        for term in terms {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let idf = self.idf(&term);
            for &(pos, tf) in list {
                let tf = S::from_count(tf as usize);
                let dl = S::from_count(self.doc_len[pos as usize]);
                let norm = k1 * (S::one() - b + b * dl / self.avg_doc_len);
                let w = idf * tf * (k1 + S::one()) / (tf + norm);
                let slot = &mut acc[pos as usize];
                *slot = Some(slot.unwrap_or_else(S::zero) + w);
            }
        }
        acc
    }

    /// Score of every document against `query`, in index order.
    pub fn score_all(&self, query: &str) -> Vec<(String, S)> {
        self.accumulate(query)
            .into_iter()
            .zip(&self.doc_ids)
            .map(|(s, id)| (id.clone(), s.unwrap_or_else(S::zero)))
            .collect()
    }

    /// Only documents sharing at least one term with the query.
    pub fn hits(&self, query: &str) -> Vec<(String, S)> {
        self.accumulate(query)
            .into_iter()
            .zip(&self.doc_ids)
            .filter_map(|(s, id)| s.map(|s| (id.clone(), s)))
            .collect()
    }

    /// Top-`k` documents for a query text, excluding `query_id` itself.
    /// Documents without any shared term still fill the list with score 0.
    pub fn retrieve(
        &self,
        query_id: &str,
        query: &str,
        k: usize,
    ) -> Result<RetrievalResult<S>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        Ok(top_k(query_id, self.score_all(query), k))
    }
}
