//! F1-maximizing threshold per class.
//!
//! A class is predicted when its score is strictly greater than the
//! threshold. Candidates are one sentinel below the smallest observed score
//! (predict every example) plus each distinct observed score except the
//! largest, so every non-empty "top-scoring suffix" of the validation set is
//! tried. F1 values are compared exactly as integer ratios; ties go to the
//! higher threshold.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ScoreMatrix, ThresholdError};
use crate::retrieval::rank_order;
use crate::Scalar;

pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Threshold for classes without validation evidence.
const FALLBACK: f64 = 0.5;

/// `F1 = 2·tp / (predicted + positives)` kept as integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct F1Ratio {
    pub tp: usize,
    pub predicted: usize,
    pub positives: usize,
}

impl F1Ratio {
    pub fn new(tp: usize, predicted: usize, positives: usize) -> Self {
        F1Ratio { tp, predicted, positives }
    }

    fn parts(&self) -> (u128, u128) {
        (2 * self.tp as u128, (self.predicted + self.positives) as u128)
    }

    pub fn is_zero(&self) -> bool {
        self.tp == 0
    }

    pub fn value<S: Scalar>(&self) -> S {
        let (n, d) = self.parts();
        S::ratio(n as usize, d as usize)
    }
}

impl PartialOrd for F1Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for F1Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        let ((a, b), (c, d)) = (self.parts(), other.parts());
        // zero denominators only occur with tp = 0, i.e. F1 = 0
        match (b, d) {
            (0, 0) => Ordering::Equal,
            (0, _) => 0.cmp(&c),
            (_, 0) => a.cmp(&0),
            _ => (a * d).cmp(&(c * b)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneCase {
    /// No candidate reaches a positive F1.
    NeverCorrect,
    /// Every candidate ties at the maximal F1.
    AllEqual,
    /// Midpoint between the best candidate and the next observed score.
    Midpoint,
    /// No validation scores for the class.
    EmptyClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassTuning<S> {
    pub class: String,
    pub threshold: S,
    pub case: TuneCase,
    pub best: F1Ratio,
}

fn step_below<S: Scalar>(v: S, eps: S) -> S {
    let t = v - eps;
    if t < v {
        t
    } else {
        v - (v.abs() * S::epsilon() * S::lit(2.0)).max(S::min_positive_value())
    }
}

fn step_above<S: Scalar>(v: S, eps: S) -> S {
    let t = v + eps;
    if t > v {
        t
    } else {
        v + (v.abs() * S::epsilon() * S::lit(2.0)).max(S::min_positive_value())
    }
}

/// Tune one class from its validation scores and gold indicators.
pub fn tune_class<S: Scalar>(class: &str, scores: &[S], positives: &[bool], eps: S) -> ClassTuning<S> {
    assert_eq!(scores.len(), positives.len(), "scores and labels must align");
    let fallback = S::lit(FALLBACK);
    if scores.is_empty() {
        return ClassTuning {
            class: class.to_owned(),
            threshold: fallback,
            case: TuneCase::EmptyClass,
            best: F1Ratio::default(),
        };
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // distinct values ascending with (count, positive count)
    let mut values: Vec<(S, usize, usize)> = Vec::new();
    for &i in &order {
        match values.last_mut() {
            Some((v, n, p)) if *v == scores[i] => {
                *n += 1;
                *p += positives[i] as usize;
            }
            _ => values.push((scores[i], 1, positives[i] as usize)),
        }
    }
    let total_pos = positives.iter().filter(|&&p| p).count();
    // candidate k predicts every example scoring >= values[k]
    let mut f1s = Vec::with_capacity(values.len());
    let (mut predicted, mut tp) = (scores.len(), total_pos);
    for &(_, n, p) in &values {
        f1s.push(F1Ratio::new(tp, predicted, total_pos));
        predicted -= n;
        tp -= p;
    }
    let mut best_k = 0;
    for (k, f) in f1s.iter().enumerate() {
        if *f >= f1s[best_k] {
            best_k = k;
        }
    }
    let best = f1s[best_k];
    let (lo, hi) = (values[0].0, values[values.len() - 1].0);
    let (threshold, case) = if best.is_zero() {
        (step_above(hi, eps).max(fallback), TuneCase::NeverCorrect)
    } else if f1s.iter().all(|f| *f == best) {
        (step_below(lo, eps).min(fallback), TuneCase::AllEqual)
    } else {
        let (c, next) = if best_k == 0 {
            (step_below(lo, eps), lo)
        } else {
            (values[best_k - 1].0, values[best_k].0)
        };
        let mid = (c + next) / S::lit(2.0);
        (if mid > c && mid < next { mid } else { c }, TuneCase::Midpoint)
    };
    ClassTuning { class: class.to_owned(), threshold, case, best }
}

/// Class → threshold; serialized as a flat JSON object.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector<S> {
    pub thresholds: BTreeMap<String, S>,
    pub epsilon: S,
    /// Per-class tuning outcome; empty for vectors loaded from disk.
    pub report: Vec<ClassTuning<S>>,
}

impl<S: Scalar> ThresholdVector<S> {
    pub fn get(&self, class: &str) -> Option<S> {
        self.thresholds.get(class).copied()
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> =
            self.thresholds.iter().map(|(c, t)| (c.as_str(), t.to_f64_lossy())).collect();
        serde_json::to_string_pretty(&map).expect("map of floats serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ThresholdError> {
        let map: BTreeMap<String, f64> =
            serde_json::from_str(s).map_err(|e| ThresholdError::Format(e.to_string()))?;
        Ok(ThresholdVector {
            thresholds: map.into_iter().map(|(c, t)| (c, S::lit(t))).collect(),
            epsilon: S::lit(DEFAULT_EPSILON),
            report: Vec::new(),
        })
    }
}

pub fn tune<S: Scalar, L: AsRef<[String]> + Sync>(
    scores: &ScoreMatrix<S>,
    labels: &HashMap<String, L>,
    eps: S,
) -> Result<ThresholdVector<S>, ThresholdError> {
    tune_with_jobs(scores, labels, eps, 1)
}

/// As [`tune`], spreading classes over `jobs` threads.
pub fn tune_with_jobs<S: Scalar, L: AsRef<[String]> + Sync>(
    scores: &ScoreMatrix<S>,
    labels: &HashMap<String, L>,
    eps: S,
    jobs: usize,
) -> Result<ThresholdVector<S>, ThresholdError> {
    let mask = scores.label_mask(labels)?;
    let one = |j: usize| {
        let positives: Vec<bool> = mask.iter().map(|row| row[j]).collect();
        tune_class(&scores.class_ids()[j], &scores.column(j), &positives, eps)
    };
    let cols = scores.cols();
    let report: Vec<ClassTuning<S>> = if jobs <= 1 || cols < 2 {
        (0..cols).map(one).collect()
    } else {
        let chunk = cols.div_ceil(jobs.min(cols));
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..cols)
                .step_by(chunk)
                .map(|start| {
                    let one = &one;
                    s.spawn(move || (start..(start + chunk).min(cols)).map(one).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("tuning thread panicked")).collect()
        })
    };
    Ok(ThresholdVector {
        thresholds: report.iter().map(|r| (r.class.clone(), r.threshold)).collect(),
        epsilon: eps,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedPrediction<S> {
    pub example_id: String,
    /// Classes scoring above their threshold, best first.
    pub tuned: Vec<(String, S)>,
    /// Every class, best first.
    pub ranking: Vec<(String, S)>,
}

impl<S: Scalar> ThresholdedPrediction<S> {
    pub fn tuned_codes(&self) -> Vec<String> {
        self.tuned.iter().map(|(c, _)| c.clone()).collect()
    }

    pub fn ranked_codes(&self, n: usize) -> Vec<String> {
        self.ranking.iter().take(n).map(|(c, _)| c.clone()).collect()
    }
}

pub fn apply<S: Scalar>(
    scores: &ScoreMatrix<S>,
    thresholds: &ThresholdVector<S>,
) -> Result<Vec<ThresholdedPrediction<S>>, ThresholdError> {
    let classes: BTreeSet<&str> = scores.class_ids().iter().map(String::as_str).collect();
    let tuned: BTreeSet<&str> = thresholds.thresholds.keys().map(String::as_str).collect();
    if classes != tuned {
        let missing: Vec<_> = classes.symmetric_difference(&tuned).take(5).collect();
        return Err(ThresholdError::ClassMismatch(format!("{missing:?}")));
    }
    let cut: Vec<S> = scores.class_ids().iter().map(|c| thresholds.thresholds[c]).collect();
    Ok((0..scores.rows())
        .map(|i| {
            let mut ranking: Vec<(String, S)> = scores
                .class_ids()
                .iter()
                .cloned()
                .zip(scores.row(i).iter().copied())
                .collect();
            ranking.sort_by(rank_order);
            let tuned = scores
                .class_ids()
                .iter()
                .zip(scores.row(i))
                .zip(&cut)
                .filter(|((_, s), t)| *s > *t)
                .map(|((c, s), _)| (c.clone(), *s))
                .collect::<Vec<_>>();
            let mut tuned = tuned;
            tuned.sort_by(rank_order);
            ThresholdedPrediction { example_id: scores.example_ids()[i].clone(), tuned, ranking }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f1_at(scores: &[f64], pos: &[bool], t: f64) -> F1Ratio {
        let pred: Vec<bool> = scores.iter().map(|&s| s > t).collect();
        F1Ratio::new(
            pred.iter().zip(pos).filter(|(a, b)| **a && **b).count(),
            pred.iter().filter(|&&a| a).count(),
            pos.iter().filter(|&&b| b).count(),
        )
    }

    #[test]
    fn f1_ratio_ordering_is_exact() {
        assert_eq!(F1Ratio::new(1, 2, 2).cmp(&F1Ratio::new(2, 4, 4)), Ordering::Equal);
        assert!(F1Ratio::new(2, 3, 3) > F1Ratio::new(1, 2, 2));
        assert_eq!(F1Ratio::new(0, 0, 0), F1Ratio::new(0, 3, 0).max(F1Ratio::new(0, 0, 0)));
        assert!(F1Ratio::new(0, 0, 0) < F1Ratio::new(1, 5, 1));
        assert_eq!(F1Ratio::new(3, 4, 5).value::<f64>(), 6.0 / 9.0);
    }

    #[test]
    fn separable_class_gets_midpoint() {
        let scores = [0.9, 0.95, 0.2, 0.1, 0.15];
        let pos = [true, true, false, false, false];
        let t = tune_class("c", &scores, &pos, 1e-6);
        assert_eq!(t.case, TuneCase::Midpoint);
        assert!(t.threshold > 0.2 && t.threshold < 0.9);
        assert_eq!(t.threshold, 0.55);
        assert_eq!(f1_at(&scores, &pos, t.threshold).value::<f64>(), 1.0);
    }

    #[test]
    fn class_without_positives_sits_above_every_score() {
        let t = tune_class("c", &[0.7, 0.9, 0.8], &[false; 3], 1e-6);
        assert_eq!(t.case, TuneCase::NeverCorrect);
        assert!(t.threshold > 0.9 && t.threshold >= 0.5);
        let low = tune_class("c", &[0.1, 0.2], &[false; 2], 1e-6);
        assert_eq!(low.threshold, 0.5);
    }

    #[test]
    fn single_value_class_predicts_everything() {
        let t = tune_class("c", &[0.8, 0.8, 0.8], &[true, false, true], 1e-6);
        assert_eq!(t.case, TuneCase::AllEqual);
        assert_eq!(t.threshold, 0.5);
        let low = tune_class("c", &[0.3f64, 0.3], &[true, false], 1e-6);
        assert!((low.threshold - (0.3 - 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn empty_class_defaults() {
        let t = tune_class::<f64>("c", &[], &[], 1e-6);
        assert_eq!((t.case, t.threshold), (TuneCase::EmptyClass, 0.5));
    }

    #[test]
    fn ties_prefer_higher_threshold() {
        // predicting {0.9} or {0.9, 0.5, 0.4} both give F1 = 2/3... check the higher wins
        let scores = [0.9, 0.5, 0.4, 0.1];
        let pos = [true, true, false, false];
        // >0.1 region: tp2 pred3 → 4/5; >0.4: tp2 pred2 → 1; best unique
        let t = tune_class("c", &scores, &pos, 1e-6);
        assert_eq!(t.threshold, 0.45);
        let scores = [0.9f64, 0.8, 0.7, 0.6];
        let pos = [true, false, false, true];
        // all: 2·2/(4+2)=2/3; >0.6: 2/5; >0.7: 2/4; >0.8: 2/3 → tie, higher threshold
        let t = tune_class("c", &scores, &pos, 1e-6);
        assert!((t.threshold - 0.85).abs() < 1e-12);
    }

    #[test]
    fn f32_sentinels_survive_large_magnitudes() {
        let t = tune_class("c", &[1000.0f32, 2000.0], &[true, true], 1e-6);
        assert!(t.threshold < 1000.0);
        let t = tune_class("c", &[3000.0f32, 2000.0], &[false, false], 1e-6);
        assert!(t.threshold > 3000.0);
    }

    #[test]
    fn apply_orders_and_filters() {
        let m = ScoreMatrix::new(
            vec!["n1".into(), "n2".into()],
            vec!["A".into(), "B".into(), "C".into()],
            vec![0.9, 0.2, 0.6, 0.1, 0.3, 0.2],
        )
        .unwrap();
        let tv = ThresholdVector {
            thresholds: [("A", 0.5), ("B", 0.5), ("C", 0.5)].map(|(c, t)| (c.to_owned(), t)).into(),
            epsilon: 1e-6,
            report: vec![],
        };
        let out = apply(&m, &tv).unwrap();
        assert_eq!(out[0].tuned_codes(), vec!["A", "C"]);
        assert!(out[1].tuned.is_empty());
        assert_eq!(out[1].ranked_codes(3), vec!["B", "C", "A"]);
        let mut high = tv.clone();
        high.thresholds.values_mut().for_each(|t| *t = 1.0);
        assert!(apply(&m, &high).unwrap().iter().all(|p| p.tuned.is_empty()));
        high.thresholds.remove("C");
        assert!(matches!(apply(&m, &high), Err(ThresholdError::ClassMismatch(_))));
    }

    #[test]
    fn json_round_trip_and_parallel_agree() {
        let classes: Vec<String> = (0..7).map(|c| format!("C{c}")).collect();
        let rows = (0..30).map(|i| {
            (format!("e{i}"), (0..7).map(|j| ((i * 31 + j * 17) % 23) as f64 / 23.0).collect())
        });
        let m = ScoreMatrix::from_rows(classes.clone(), rows).unwrap();
        let labels: HashMap<String, Vec<String>> = (0..30)
            .map(|i| (format!("e{i}"), vec![classes[i % 7].clone(), classes[(i * 3) % 7].clone()]))
            .collect();
        let a = tune(&m, &labels, 1e-6).unwrap();
        let b = tune_with_jobs(&m, &labels, 1e-6, 3).unwrap();
        assert_eq!(a, b);
        let back = ThresholdVector::<f64>::from_json(&a.to_json()).unwrap();
        assert_eq!(back.thresholds, a.thresholds);
    }
}
