use std::collections::HashSet;

use super::{top_k, RetrievalError, RetrievalResult, VectorFile};
use crate::Scalar;

const NORM_TOLERANCE: f64 = 1e-4;

/// Exact cosine-similarity index over externally produced vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex<S> {
    dim: usize,
    ids: Vec<String>,
    data: Vec<S>,
    norms: Vec<S>,
    normalized: bool,
}

fn norm<S: Scalar>(v: &[S]) -> S {
    v.iter().map(|x| *x * *x).sum::<S>().sqrt()
}

impl<S: Scalar> DenseIndex<S> {
    pub fn new<I>(dim: usize, normalized: bool, records: I) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (String, Vec<S>)>,
    {
        if dim == 0 {
            return Err(RetrievalError::InvalidVector("dimension 0".into()));
        }
        let mut seen = HashSet::new();
        let mut index = DenseIndex {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            norms: Vec::new(),
            normalized,
        };
        for (id, v) in records {
            if v.len() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(RetrievalError::InvalidVector(format!("{id}: non-finite entry")));
            }
            let n = norm(&v);
            if normalized && (n - S::one()).abs() > S::lit(NORM_TOLERANCE) {
                return Err(RetrievalError::InvalidVector(format!(
                    "{id}: norm {n} but file is marked normalized"
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(RetrievalError::DuplicateId(id));
            }
            index.ids.push(id);
            index.data.extend(v);
            index.norms.push(n);
        }
        if index.ids.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        Ok(index)
    }

    pub fn from_vector_file(file: VectorFile) -> Result<Self, RetrievalError> {
        let cast = |x: f32| S::from_f32(x).unwrap_or_else(S::nan);
        Self::new(
            file.dim,
            file.normalized,
            file.records
                .into_iter()
                .map(|(id, v)| (id, v.into_iter().map(cast).collect())),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, id: &str) -> Option<&[S]> {
        let pos = self.ids.iter().position(|i| i == id)?;
        Some(&self.data[pos * self.dim..(pos + 1) * self.dim])
    }

    /// Restrict to the given ids, keeping their vectors unchanged.
    pub fn subset<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Result<Self, RetrievalError> {
        let keep: HashSet<&str> = keep.into_iter().collect();
        let records = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| keep.contains(id.as_str()))
            .map(|(i, id)| (id.clone(), self.data[i * self.dim..(i + 1) * self.dim].to_vec()));
        Self::new(self.dim, self.normalized, records)
    }

    /// Cosine similarity of `query` against every stored vector. Stored zero
    /// vectors score 0.
    pub fn cosine_all(&self, query: &[S]) -> Result<Vec<(String, S)>, RetrievalError> {
        if query.len() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let qn = norm(query);
        if !qn.is_finite() || qn == S::zero() {
            return Err(RetrievalError::InvalidVector("query has zero or non-finite norm".into()));
        }
        Ok(self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                let dot: S = row.iter().zip(query).map(|(a, b)| *a * *b).sum();
                let dn = self.norms[i];
                let cos = if dn == S::zero() { S::zero() } else { dot / (dn * qn) };
                (id.clone(), cos)
            })
            .collect())
    }

    pub fn retrieve(
        &self,
        query_id: &str,
        query: &[S],
        k: usize,
    ) -> Result<RetrievalResult<S>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::ZeroK);
        }
        Ok(top_k(query_id, self.cosine_all(query)?, k))
    }
}

/// Plain cosine similarity; `None` if either vector has zero norm.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> Option<S> {
    let (na, nb) = (norm(a), norm(b));
    if na == S::zero() || nb == S::zero() || a.len() != b.len() {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| *x * *y).sum::<S>() / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn index() -> DenseIndex<f64> {
        DenseIndex::new(
            2,
            false,
            [
                ("a".to_owned(), vec![1.0, 0.0]),
                ("b".to_owned(), vec![0.9, 0.1]),
                ("c".to_owned(), vec![0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn self_is_excluded() {
        let idx = index();
        let q = idx.vector("a").unwrap().to_vec();
        let r = idx.retrieve("a", &q, 1).unwrap();
        assert_eq!(r.ranked[0].0, "b");
    }

    #[test]
    fn orthogonal_query_ranks_by_id() {
        let idx = DenseIndex::<f64>::new(
            3,
            false,
            [
                ("z".to_owned(), vec![1.0, 0.0, 0.0]),
                ("m".to_owned(), vec![0.0, 1.0, 0.0]),
                ("a".to_owned(), vec![1.0, 1.0, 0.0]),
            ],
        )
        .unwrap();
        let r = idx.retrieve("q", &[0.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), vec!["a", "m", "z"]);
        assert!(r.ranked.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn errors() {
        let idx = index();
        assert!(matches!(
            idx.retrieve("q", &[1.0], 1),
            Err(RetrievalError::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(
            idx.retrieve("q", &[0.0, 0.0], 1),
            Err(RetrievalError::InvalidVector(_))
        ));
        assert!(DenseIndex::<f64>::new(2, true, [("a".to_owned(), vec![2.0, 0.0])]).is_err());
        assert!(DenseIndex::<f64>::new(2, true, [("a".to_owned(), vec![0.6, 0.8])]).is_ok());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_unit_on_self(
            a in prop::collection::vec(-10.0f64..10.0, 4),
            b in prop::collection::vec(-10.0f64..10.0, 4),
        ) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let ab = cosine(&a, &b).unwrap();
            let ba = cosine(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }
    }
}
