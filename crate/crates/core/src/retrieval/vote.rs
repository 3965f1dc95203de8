use std::collections::HashMap;

use super::{rank_order, RetrievalResult};
use crate::Scalar;

/// Majority vote over the labels of retrieved neighbors.
///
/// Labels are ordered by how many neighbors carry them, then by the rank of
/// the best neighbor carrying them (more similar first), then by code. The
/// neighbor list is re-sorted by (score desc, id asc) first, so the outcome
/// does not depend on the order the caller passes neighbors in.
pub fn majority_vote<S, L>(
    neighbors: &RetrievalResult<S>,
    train_labels: &HashMap<String, L>,
    top_n: usize,
) -> Vec<String>
where
    S: Scalar,
    L: AsRef<[String]>,
{
    let mut ranked = neighbors.ranked.clone();
    ranked.sort_by(rank_order);

    // code -> (frequency, best neighbor rank)
    let mut tally: HashMap<&str, (usize, usize)> = HashMap::new();
    for (rank, (id, _)) in ranked.iter().enumerate() {
        let Some(labels) = train_labels.get(id) else {
            continue;
        };
        let mut seen = std::collections::HashSet::new();
        for code in labels.as_ref() {
            if !seen.insert(code.as_str()) {
                continue;
            }
            let e = tally.entry(code.as_str()).or_insert((0, rank));
            e.0 += 1;
            e.1 = e.1.min(rank);
        }
    }
    let mut out: Vec<(&str, usize, usize)> =
        tally.into_iter().map(|(c, (f, r))| (c, f, r)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(b.0)));
    out.into_iter()
        .take(top_n)
        .map(|(c, _, _)| c.to_owned())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(ids: &[(&str, f64)]) -> RetrievalResult<f64> {
        RetrievalResult {
            query_id: "q".into(),
            ranked: ids.iter().map(|(i, s)| (i.to_string(), *s)).collect(),
        }
    }

    fn labels(pairs: &[(&str, &[&str])]) -> HashMap<String, Vec<String>> {
        pairs
            .iter()
            .map(|(id, ls)| (id.to_string(), ls.iter().map(|s| s.to_string()).collect()))
            .collect()
    }

    #[test]
    fn unanimous() {
        let n = result(&[("1", 5.0), ("2", 4.0), ("3", 3.0), ("4", 2.0), ("5", 1.0)]);
        let l = labels(&[("1", &["A"]), ("2", &["A"]), ("3", &["A"]), ("4", &["A"]), ("5", &["A"])]);
        assert_eq!(majority_vote(&n, &l, 20), vec!["A"]);
    }

    #[test]
    fn equal_frequency_prefers_more_similar_neighbor() {
        // A on neighbors ranked 1 and 3, B on 2 and 4.
        let n = result(&[("n1", 0.9), ("n2", 0.8), ("n3", 0.7), ("n4", 0.6), ("n5", 0.5)]);
        let l = labels(&[
            ("n1", &["A"]),
            ("n2", &["B"]),
            ("n3", &["A"]),
            ("n4", &["B"]),
            ("n5", &["C"]),
        ]);
        assert_eq!(majority_vote(&n, &l, 20), vec!["A", "B", "C"]);
        assert_eq!(majority_vote(&n, &l, 1), vec!["A"]);
    }
}
