//! Top-n multi-label evaluation: macro P/R/F1, micro-F1, MAP, main-diagnosis
//! accuracy, and frequency-tertile and note-length breakdowns.
//!
//! Per-class quantities range over registry classes with at least one gold
//! occurrence in the evaluated notes. A class's average precision ranks the
//! notes that predicted it by the class's position in their list (ties by note
//! id) and normalizes by the number of notes holding it in gold.

mod diagnostics;
mod output;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, Tertile};
use crate::mapping::MappedPrediction;
use crate::thresholds::ThresholdedPrediction;
use crate::Scalar;

pub use diagnostics::{generation_diagnostics, GenerationDiagnostics};
pub use output::{mean_reports, write_csv, CSV_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction and gold note ids differ: {0}")]
    IdMismatch(String),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("no token count for note {0}")]
    MissingTokenCount(String),
    #[error("cannot average reports: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n: usize,
    pub registry: BTreeSet<String>,
    pub tertiles: BTreeMap<String, Tertile>,
    /// Strictly increasing token-count edges; buckets are `[0, e1), [e1, e2),
    /// …, [ek, ∞)`.
    pub length_buckets: Vec<usize>,
}

impl EvalConfig {
    pub fn new(n: usize, registry: BTreeSet<String>) -> Self {
        EvalConfig { n, registry, tertiles: BTreeMap::new(), length_buckets: Vec::new() }
    }

    pub fn from_split(split: &DatasetSplit, n: usize) -> Self {
        EvalConfig {
            n,
            registry: split.label_registry.clone(),
            tertiles: split.tertiles.clone(),
            length_buckets: Vec::new(),
        }
    }

    pub fn with_buckets(mut self, edges: Vec<usize>) -> Self {
        self.length_buckets = edges;
        self
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.n == 0 {
            return Err(MetricsError::Config("n must be at least 1".into()));
        }
        if self.length_buckets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MetricsError::Config("bucket edges must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Ordered, deduplicated codes predicted for one note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub note_id: String,
    pub codes: Vec<String>,
}

impl RankedPrediction {
    /// Drops repeated codes, keeping first occurrences.
    pub fn new(note_id: impl Into<String>, codes: impl IntoIterator<Item = String>) -> Self {
        let mut seen = HashSet::new();
        RankedPrediction {
            note_id: note_id.into(),
            codes: codes.into_iter().filter(|c| seen.insert(c.clone())).collect(),
        }
    }

    pub fn top(&self, n: usize) -> &[String] {
        &self.codes[..n.min(self.codes.len())]
    }
}

impl From<&MappedPrediction> for RankedPrediction {
    fn from(p: &MappedPrediction) -> Self {
        RankedPrediction::new(p.note_id.clone(), p.codes())
    }
}

impl RankedPrediction {
    /// Threshold-filtered classes, best first.
    pub fn tuned<S: Scalar>(p: &ThresholdedPrediction<S>) -> Self {
        RankedPrediction::new(p.example_id.clone(), p.tuned_codes())
    }

    /// The `n` best-scoring classes regardless of threshold.
    pub fn untuned<S: Scalar>(p: &ThresholdedPrediction<S>, n: usize) -> Self {
        RankedPrediction::new(p.example_id.clone(), p.ranked_codes(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    pub fn gold(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn merge(&mut self, o: &ClassCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn precision<S: Scalar>(&self) -> S {
        S::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall<S: Scalar>(&self) -> S {
        S::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1<S: Scalar>(&self) -> S {
        S::ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics<S> {
    pub recall: S,
    pub precision: S,
    pub f1: S,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics<S> {
    pub lo: usize,
    /// Exclusive; `None` for the open last bucket.
    pub hi: Option<usize>,
    pub notes: usize,
    /// `None` for an empty bucket.
    pub micro_f1: Option<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<S> {
    pub notes: usize,
    pub n: usize,
    pub macro_recall: S,
    pub macro_precision: S,
    pub macro_f1: S,
    /// Class-macro mean average precision.
    pub map: S,
    /// Note-level mean average precision at `n`.
    pub example_map: S,
    pub md_acc: S,
    pub micro_f1: S,
    /// Classes entering the macro averages.
    pub evaluated_classes: usize,
    pub per_tertile: BTreeMap<Tertile, Option<GroupMetrics<S>>>,
    pub per_bucket: Vec<BucketMetrics<S>>,
    pub valid_json_rate: Option<S>,
    pub avg_pred_codes: S,
}

fn check_ids<L>(preds: &[RankedPrediction], gold: &HashMap<String, L>) -> Result<(), MetricsError> {
    let ids: HashSet<&str> = preds.iter().map(|p| p.note_id.as_str()).collect();
    if ids.len() != preds.len() {
        return Err(MetricsError::IdMismatch("duplicate prediction ids".into()));
    }
    if let Some(p) = preds.iter().find(|p| !gold.contains_key(&p.note_id)) {
        return Err(MetricsError::IdMismatch(format!("{} has no gold labels", p.note_id)));
    }
    if let Some(g) = gold.keys().find(|g| !ids.contains(g.as_str())) {
        return Err(MetricsError::IdMismatch(format!("{g} has no prediction")));
    }
    Ok(())
}

/// Per-class confusion counts over registry classes, using top-`n` lists.
pub fn class_counts<'a, L: AsRef<[String]> + 'a>(
    preds: impl IntoIterator<Item = &'a RankedPrediction>,
    gold: &HashMap<String, L>,
    registry: &BTreeSet<String>,
    n: usize,
) -> BTreeMap<String, ClassCounts> {
    let mut counts: BTreeMap<String, ClassCounts> = BTreeMap::new();
    for p in preds {
        let g: HashSet<&str> = gold[&p.note_id].as_ref().iter().map(String::as_str).collect();
        let top: HashSet<&str> = p.top(n).iter().map(String::as_str).collect();
        for &c in top.union(&g) {
            if !registry.contains(c) {
                continue;
            }
            let e = counts.entry(c.to_owned()).or_default();
            match (top.contains(c), g.contains(c)) {
                (true, true) => e.tp += 1,
                (true, false) => e.fp += 1,
                (false, true) => e.fn_ += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    counts
}

fn pooled_f1<S: Scalar>(counts: &BTreeMap<String, ClassCounts>) -> S {
    let mut all = ClassCounts::default();
    counts.values().for_each(|c| all.merge(c));
    all.f1()
}

fn group<'a, S: Scalar>(counts: impl Iterator<Item = &'a ClassCounts>) -> Option<GroupMetrics<S>> {
    let evaluated: Vec<&ClassCounts> = counts.filter(|c| c.gold() > 0).collect();
    if evaluated.is_empty() {
        return None;
    }
    let k = S::from_count(evaluated.len());
    Some(GroupMetrics {
        recall: evaluated.iter().map(|c| c.recall::<S>()).sum::<S>() / k,
        precision: evaluated.iter().map(|c| c.precision::<S>()).sum::<S>() / k,
        f1: evaluated.iter().map(|c| c.f1::<S>()).sum::<S>() / k,
        classes: evaluated.len(),
    })
}

/// Average precision of one ranked list of relevance flags.
fn average_precision<S: Scalar>(ranked_relevance: impl Iterator<Item = bool>, relevant: usize) -> S {
    let mut hits = 0;
    let mut sum = S::zero();
    for (k, rel) in ranked_relevance.enumerate() {
        if rel {
            hits += 1;
            sum = sum + S::ratio(hits, k + 1);
        }
    }
    if relevant == 0 { S::zero() } else { sum / S::from_count(relevant) }
}

fn class_map<S: Scalar, L: AsRef<[String]>>(
    preds: &[RankedPrediction],
    gold: &HashMap<String, L>,
    cfg: &EvalConfig,
) -> S {
    // class → [(position, note_id)] of notes predicting it within top-n
    let mut retrieved: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    let mut relevant: BTreeMap<&str, usize> = BTreeMap::new();
    for p in preds {
        for (pos, c) in p.top(cfg.n).iter().enumerate() {
            if cfg.registry.contains(c) {
                retrieved.entry(c).or_default().push((pos, &p.note_id));
            }
        }
        let unique: HashSet<&str> = gold[&p.note_id].as_ref().iter().map(String::as_str).collect();
        for c in unique {
            if cfg.registry.contains(c) {
                *relevant.entry(c).or_default() += 1;
            }
        }
    }
    let aps: Vec<S> = relevant
        .iter()
        .map(|(&c, &rel)| {
            let mut list = retrieved.remove(c).unwrap_or_default();
            list.sort();
            let flags = list.iter().map(|(_, note)| gold[*note].as_ref().iter().any(|g| g == c));
            average_precision(flags, rel)
        })
        .collect();
    crate::scalar::mean(&aps).unwrap_or_else(S::zero)
}

fn example_map<S: Scalar, L: AsRef<[String]>>(
    preds: &[RankedPrediction],
    gold: &HashMap<String, L>,
    cfg: &EvalConfig,
) -> S {
    let aps: Vec<S> = preds
        .iter()
        .filter_map(|p| {
            let g: HashSet<&str> = gold[&p.note_id]
                .as_ref()
                .iter()
                .map(String::as_str)
                .filter(|c| cfg.registry.contains(*c))
                .collect();
            if g.is_empty() {
                return None;
            }
            let flags = p.top(cfg.n).iter().map(|c| g.contains(c.as_str()));
            Some(average_precision(flags, g.len().min(cfg.n)))
        })
        .collect();
    crate::scalar::mean(&aps).unwrap_or_else(S::zero)
}

/// Full metric report. `token_counts` enables the length breakdown.
pub fn score<S: Scalar, L: AsRef<[String]>>(
    preds: &[RankedPrediction],
    gold: &HashMap<String, L>,
    cfg: &EvalConfig,
    token_counts: Option<&HashMap<String, usize>>,
) -> Result<MetricReport<S>, MetricsError> {
    cfg.validate()?;
    check_ids(preds, gold)?;
    let counts = class_counts(preds, gold, &cfg.registry, cfg.n);
    let macro_ = group::<S>(counts.values());
    let md_hits = preds
        .iter()
        .filter(|p| {
            gold[&p.note_id]
                .as_ref()
                .first()
                .is_some_and(|main| p.top(cfg.n).contains(main))
        })
        .count();
    let pred_codes: usize = preds.iter().map(|p| p.top(cfg.n).len()).sum();
    let per_bucket = match token_counts {
        Some(tc) => length_breakdown(preds, gold, tc, cfg)?,
        None => Vec::new(),
    };
    Ok(MetricReport {
        notes: preds.len(),
        n: cfg.n,
        macro_recall: macro_.as_ref().map_or_else(S::zero, |m| m.recall),
        macro_precision: macro_.as_ref().map_or_else(S::zero, |m| m.precision),
        macro_f1: macro_.as_ref().map_or_else(S::zero, |m| m.f1),
        map: class_map(preds, gold, cfg),
        example_map: example_map(preds, gold, cfg),
        md_acc: S::ratio(md_hits, preds.len()),
        micro_f1: pooled_f1(&counts),
        evaluated_classes: macro_.as_ref().map_or(0, |m| m.classes),
        per_tertile: tertiles_of(&counts, cfg),
        per_bucket,
        valid_json_rate: None,
        avg_pred_codes: S::ratio(pred_codes, preds.len()),
    })
}

fn tertiles_of<S: Scalar>(
    counts: &BTreeMap<String, ClassCounts>,
    cfg: &EvalConfig,
) -> BTreeMap<Tertile, Option<GroupMetrics<S>>> {
    if cfg.tertiles.is_empty() {
        return BTreeMap::new();
    }
    Tertile::ALL
        .iter()
        .map(|&t| {
            let members = counts
                .iter()
                .filter(|(c, _)| cfg.tertiles.get(*c) == Some(&t))
                .map(|(_, k)| k);
            (t, group(members))
        })
        .collect()
}

/// Macro recall/precision restricted to each frequency tertile; `None` for a
/// tertile with no evaluated class.
pub fn tertile_breakdown<S: Scalar, L: AsRef<[String]>>(
    preds: &[RankedPrediction],
    gold: &HashMap<String, L>,
    cfg: &EvalConfig,
) -> Result<BTreeMap<Tertile, Option<GroupMetrics<S>>>, MetricsError> {
    cfg.validate()?;
    check_ids(preds, gold)?;
    let counts = class_counts(preds, gold, &cfg.registry, cfg.n);
    let mut out = tertiles_of(&counts, cfg);
    if out.is_empty() {
        out = Tertile::ALL.iter().map(|&t| (t, None)).collect();
    }
    Ok(out)
}

/// Micro-F1 per note-length bucket.
pub fn length_breakdown<S: Scalar, L: AsRef<[String]>>(
    preds: &[RankedPrediction],
    gold: &HashMap<String, L>,
    token_counts: &HashMap<String, usize>,
    cfg: &EvalConfig,
) -> Result<Vec<BucketMetrics<S>>, MetricsError> {
    cfg.validate()?;
    check_ids(preds, gold)?;
    let edges = &cfg.length_buckets;
    let mut members: Vec<Vec<&RankedPrediction>> = vec![Vec::new(); edges.len() + 1];
    for p in preds {
        let len = *token_counts
            .get(&p.note_id)
            .ok_or_else(|| MetricsError::MissingTokenCount(p.note_id.clone()))?;
        members[edges.partition_point(|&e| e <= len)].push(p);
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(i, ps)| {
            let lo = if i == 0 { 0 } else { edges[i - 1] };
            let micro_f1 = (!ps.is_empty())
                .then(|| pooled_f1(&class_counts(ps.iter().copied(), gold, &cfg.registry, cfg.n)));
            BucketMetrics { lo, hi: edges.get(i).copied(), notes: ps.len(), micro_f1 }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    fn gold(rows: &[(&str, &[&str])]) -> HashMap<String, Vec<String>> {
        rows.iter().map(|(id, g)| (id.to_string(), s(g))).collect()
    }

    fn preds(rows: &[(&str, &[&str])]) -> Vec<RankedPrediction> {
        rows.iter().map(|(id, p)| RankedPrediction::new(*id, s(p))).collect()
    }

    fn registry(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn perfect_and_empty_predictors() {
        let rows: &[(&str, &[&str])] = &[("a", &["X", "Y"]), ("b", &["Y"]), ("c", &["Z", "X"])];
        let g = gold(rows);
        let cfg = EvalConfig::new(20, registry(&["X", "Y", "Z"]));
        let r = score::<f64, _>(&preds(rows), &g, &cfg, None).unwrap();
        for v in [r.macro_recall, r.macro_precision, r.macro_f1, r.map, r.example_map, r.md_acc, r.micro_f1] {
            assert_eq!(v, 1.0);
        }
        let empty = preds(&[("a", &[]), ("b", &[]), ("c", &[])]);
        let r = score::<f64, _>(&empty, &g, &cfg, None).unwrap();
        for v in [r.macro_recall, r.macro_precision, r.macro_f1, r.map, r.example_map, r.md_acc, r.micro_f1, r.avg_pred_codes] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn id_mismatch() {
        let g = gold(&[("a", &["X"])]);
        let cfg = EvalConfig::new(20, registry(&["X"]));
        assert!(matches!(score::<f64, _>(&preds(&[("b", &["X"])]), &g, &cfg, None), Err(MetricsError::IdMismatch(_))));
        assert!(matches!(score::<f64, _>(&[], &g, &cfg, None), Err(MetricsError::IdMismatch(_))));
    }

    #[test]
    fn truncation_and_md_acc() {
        let g = gold(&[("a", &["X", "Y"]), ("b", &["Y", "X"])]);
        let p = preds(&[("a", &["Q", "X"]), ("b", &["X", "Y"])]);
        let cfg = EvalConfig::new(1, registry(&["X", "Y", "Q"]));
        let r = score::<f64, _>(&p, &g, &cfg, None).unwrap();
        assert_eq!(r.md_acc, 0.0);
        let r2 = score::<f64, _>(&p, &g, &EvalConfig { n: 2, ..cfg }, None).unwrap();
        assert_eq!(r2.md_acc, 1.0);
        assert!(r2.macro_recall >= r.macro_recall);
    }

    #[test]
    fn one_class_macro_equals_micro() {
        let g = gold(&[("a", &["X"]), ("b", &["X"]), ("c", &["W"])]);
        let p = preds(&[("a", &["X"]), ("b", &[]), ("c", &["X"])]);
        let cfg = EvalConfig::new(20, registry(&["X"]));
        let r = score::<f64, _>(&p, &g, &cfg, None).unwrap();
        assert_eq!(r.macro_f1, r.micro_f1);
        assert_eq!(r.macro_f1, 0.5);
    }

    #[test]
    fn class_map_ranks_by_position_then_note() {
        let g = gold(&[("a", &["X"]), ("b", &["X"]), ("c", &["Y"])]);
        let p = preds(&[("a", &["X"]), ("b", &["Y", "X"]), ("c", &["X", "Y"])]);
        let cfg = EvalConfig::new(20, registry(&["X", "Y"]));
        let r = score::<f64, _>(&p, &g, &cfg, None).unwrap();
        // X: (0,a) rel, (0,c) not, (1,b) rel → (1 + 2/3)/2; Y: (0,b) not, (1,c) rel → 1/2
        assert!((r.map - (5.0 / 6.0 + 0.5) / 2.0).abs() < 1e-15);
        // a → 1, b → 1/2, c → 1/2
        assert!((r.example_map - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tertiles_and_buckets() {
        let g = gold(&[("a", &["H"]), ("b", &["H", "T"]), ("c", &["H"])]);
        let p = preds(&[("a", &["H"]), ("b", &["H"]), ("c", &[])]);
        let mut cfg = EvalConfig::new(20, registry(&["H", "T"]));
        cfg.tertiles = [("H".to_owned(), Tertile::Head), ("T".to_owned(), Tertile::Head)].into();
        let t = tertile_breakdown::<f64, _>(&p, &g, &cfg).unwrap();
        assert!(t[&Tertile::Tail].is_none() && t[&Tertile::Body].is_none());
        let head = t[&Tertile::Head].as_ref().unwrap();
        assert_eq!((head.recall, head.precision), ((2.0 / 3.0 + 0.0) / 2.0, 0.5));

        let tokens: HashMap<String, usize> = [("a", 5), ("b", 10), ("c", 150)].map(|(k, v)| (k.to_owned(), v)).into();
        let global = score::<f64, _>(&p, &g, &cfg, None).unwrap().micro_f1;
        let one = length_breakdown::<f64, _>(&p, &g, &tokens, &cfg).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].micro_f1, Some(global));
        let split = length_breakdown::<f64, _>(&p, &g, &tokens, &cfg.clone().with_buckets(vec![10, 100, 200])).unwrap();
        assert_eq!(split.iter().map(|b| b.notes).collect::<Vec<_>>(), vec![1, 1, 1, 0]);
        assert_eq!(split[0].micro_f1, Some(1.0));
        assert_eq!(split[1].micro_f1, Some(2.0 / 3.0));
        assert_eq!(split[2].micro_f1, Some(0.0));
        assert_eq!(split[3].micro_f1, None);
        assert_eq!((split[3].lo, split[3].hi), (200, None));
        assert!(EvalConfig::new(20, BTreeSet::new()).with_buckets(vec![5, 5]).validate().is_err());
    }
}
