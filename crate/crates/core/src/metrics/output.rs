use std::collections::BTreeMap;
use std::io::Write;

use super::{BucketMetrics, GroupMetrics, MetricReport, MetricsError};
use crate::corpus::Tertile;
use crate::Scalar;

fn mean_of<S: Scalar>(xs: impl Iterator<Item = S>) -> S {
    let v: Vec<S> = xs.collect();
    crate::scalar::mean(&v).unwrap_or_else(S::zero)
}

fn mean_opt<S: Scalar>(xs: impl Iterator<Item = Option<S>>) -> Option<S> {
    let v: Vec<S> = xs.flatten().collect();
    crate::scalar::mean(&v)
}

/// Unweighted mean of reports (e.g. the ICD-9 and ICD-10 runs). Optional
/// entries average over the reports where they are present; length buckets
/// must share edges.
pub fn mean_reports<S: Scalar>(reports: &[MetricReport<S>]) -> Result<MetricReport<S>, MetricsError> {
    let first = reports.first().ok_or_else(|| MetricsError::Incompatible("no reports".into()))?;
    if reports.iter().any(|r| r.n != first.n) {
        return Err(MetricsError::Incompatible("different n".into()));
    }
    let edges = |r: &MetricReport<S>| r.per_bucket.iter().map(|b| (b.lo, b.hi)).collect::<Vec<_>>();
    if reports.iter().any(|r| edges(r) != edges(first)) {
        return Err(MetricsError::Incompatible("different length buckets".into()));
    }
    let avg = |f: fn(&MetricReport<S>) -> S| mean_of(reports.iter().map(f));
    let mut per_tertile = BTreeMap::new();
    for t in Tertile::ALL {
        let present: Vec<&GroupMetrics<S>> = reports
            .iter()
            .filter_map(|r| r.per_tertile.get(&t).and_then(Option::as_ref))
            .collect();
        if reports.iter().any(|r| r.per_tertile.contains_key(&t)) {
            per_tertile.insert(
                t,
                (!present.is_empty()).then(|| GroupMetrics {
                    recall: mean_of(present.iter().map(|g| g.recall)),
                    precision: mean_of(present.iter().map(|g| g.precision)),
                    f1: mean_of(present.iter().map(|g| g.f1)),
                    classes: present.iter().map(|g| g.classes).sum(),
                }),
            );
        }
    }
    let per_bucket = first
        .per_bucket
        .iter()
        .enumerate()
        .map(|(i, b)| BucketMetrics {
            lo: b.lo,
            hi: b.hi,
            notes: reports.iter().map(|r| r.per_bucket[i].notes).sum(),
            micro_f1: mean_opt(reports.iter().map(|r| r.per_bucket[i].micro_f1)),
        })
        .collect();
    Ok(MetricReport {
        notes: reports.iter().map(|r| r.notes).sum(),
        n: first.n,
        macro_recall: avg(|r| r.macro_recall),
        macro_precision: avg(|r| r.macro_precision),
        macro_f1: avg(|r| r.macro_f1),
        map: avg(|r| r.map),
        example_map: avg(|r| r.example_map),
        md_acc: avg(|r| r.md_acc),
        micro_f1: avg(|r| r.micro_f1),
        evaluated_classes: reports.iter().map(|r| r.evaluated_classes).sum(),
        per_tertile,
        per_bucket,
        valid_json_rate: mean_opt(reports.iter().map(|r| r.valid_json_rate)),
        avg_pred_codes: avg(|r| r.avg_pred_codes),
    })
}

pub const CSV_HEADER: [&str; 20] = [
    "dataset", "model", "setting", "notes", "n", "macro_recall", "macro_precision", "macro_f1",
    "map", "example_map", "md_acc", "micro_f1", "valid_json_rate", "avg_pred_codes",
    "head_recall", "head_precision", "body_recall", "body_precision", "tail_recall", "tail_precision",
];

/// Flat CSV, one row per `(dataset, model, setting)`; missing values are empty.
pub fn write_csv<S: Scalar, W: Write>(
    w: W,
    rows: &[(&str, &str, &str, &MetricReport<S>)],
) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    let f = |v: S| v.to_f64_lossy().to_string();
    let o = |v: Option<S>| v.map(f).unwrap_or_default();
    for (dataset, model, setting, r) in rows {
        let mut rec = vec![
            dataset.to_string(),
            model.to_string(),
            setting.to_string(),
            r.notes.to_string(),
            r.n.to_string(),
        ];
        rec.extend(
            [r.macro_recall, r.macro_precision, r.macro_f1, r.map, r.example_map, r.md_acc, r.micro_f1]
                .map(f),
        );
        rec.push(o(r.valid_json_rate));
        rec.push(f(r.avg_pred_codes));
        for t in Tertile::ALL {
            let g = r.per_tertile.get(&t).and_then(Option::as_ref);
            rec.push(o(g.map(|g| g.recall)));
            rec.push(o(g.map(|g| g.precision)));
        }
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
