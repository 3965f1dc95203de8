use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{top_k, RetrievalError, RetrievalResult};
use crate::Scalar;

/// Otsuka coefficient `|A ∩ B| / sqrt(|A| · |B|)`; zero if either set is empty.
pub fn otsuka<S, T>(a: &HashSet<T>, b: &HashSet<T>) -> S
where
    S: Scalar,
    T: Eq + std::hash::Hash,
{
    if a.is_empty() || b.is_empty() {
        return S::zero();
    }
    if a.len() == b.len() && a == b {
        return S::one();
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|x| large.contains(*x)).count();
    S::from_count(inter) / (S::from_count(a.len()) * S::from_count(b.len())).sqrt()
}

/// Oracle retriever: rank training notes by label-set overlap with the query's
/// own gold labels. Ties break by ascending id.
pub fn gold_heuristic<'a, S, I, L>(
    query_id: &str,
    query_labels: &[String],
    train: I,
    k: usize,
) -> Result<RetrievalResult<S>, RetrievalError>
where
    S: Scalar,
    I: IntoIterator<Item = (&'a str, L)>,
    L: IntoIterator<Item = &'a String>,
{
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let query: HashSet<&str> = query_labels.iter().map(String::as_str).collect();
    let scored = train
        .into_iter()
        .map(|(id, labels)| {
            let set: HashSet<&str> = labels.into_iter().map(String::as_str).collect();
            (id.to_owned(), otsuka::<S, _>(&query, &set))
        })
        .collect();
    Ok(top_k(query_id, scored, k))
}

fn query_rng(query_id: &str, seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Uniform sample of `k` training notes without replacement, reproducible per
/// `(query_id, seed)`. All scores are zero, so the result is ordered by id.
pub fn random_retrieve<S: Scalar>(
    query_id: &str,
    train_ids: &[String],
    k: usize,
    seed: u64,
) -> Result<RetrievalResult<S>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let mut pool: Vec<&String> = train_ids.iter().filter(|id| *id != query_id).collect();
    pool.sort();
    pool.dedup();
    if k > pool.len() {
        return Err(RetrievalError::KTooLarge {
            k,
            available: pool.len(),
        });
    }
    let mut rng = query_rng(query_id, seed);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| (pool[i].clone(), S::zero()))
        .collect();
    Ok(top_k(query_id, picked, k))
}
