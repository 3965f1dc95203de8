use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use clinibench::corpus::{CodeTable, IcdVersion};
use clinibench::guided::GenerationRecord;
use clinibench::mapping::{map_all, CodeMatcher, EmbeddingContext, MappedPrediction, Strategy};
use clinibench::metrics::{
    generation_diagnostics, mean_reports, score as score_predictions, write_csv, EvalConfig,
    MetricReport, RankedPrediction,
};
use clinibench::retrieval::{read_vector_file, DenseIndex};
use clinibench::text::whitespace_token_count;
use clinibench::thresholds::{apply, read_score_matrix, tune_with_jobs, ThresholdVector, DEFAULT_EPSILON};

use crate::config::Ctx;
use crate::manifest::Run;
use crate::util::{emit, load_split, parse_usize_list, par_map, read_jsonl, read_text, write_json, write_jsonl, Dataset};
use crate::Out;

#[derive(Args)]
pub struct MapArgs {
    /// Generation records JSONL.
    #[arg(long)]
    generations: PathBuf,
    /// Code table CSV.
    #[arg(long)]
    codes: PathBuf,
    /// ICD version of the generated codes, 9 or 10 [default: 10].
    #[arg(long)]
    icd_version: Option<u8>,
    /// exact-then-embedding, exact-then-lexical, embedding-only or
    /// lexical-only [default: exact-then-embedding].
    #[arg(long)]
    strategy: Option<String>,
    /// Code-description vectors (ids `CODE`, `CODE#s` or `CODE#l`).
    #[arg(long)]
    code_vectors: Option<PathBuf>,
    /// Generated-description vectors (ids `NOTE#INDEX`).
    #[arg(long)]
    desc_vectors: Option<PathBuf>,
    #[command(flatten)]
    out: Out,
}

fn load_dense(path: &std::path::Path) -> Result<DenseIndex<f32>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(DenseIndex::from_vector_file(read_vector_file(BufReader::new(file))?)?)
}

#[derive(Serialize)]
struct MappingSummary {
    records: usize,
    descriptions: usize,
    exact: usize,
    lexical: usize,
    embedding: usize,
    discarded: usize,
    items_after_dedup: usize,
    discarded_after_dedup: usize,
    avg_codes_after_dedup: f64,
}

pub fn map(ctx: &Ctx, a: MapArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let version: u8 = ctx.pick("icd_version", a.icd_version, 10)?;
    let strategy: Strategy = ctx.pick("strategy", a.strategy, Strategy::default().to_string())?.parse()?;
    run.param("icd_version", version);
    run.param("strategy", strategy.to_string());

    let records: Vec<GenerationRecord> = read_jsonl(run.input(&a.generations))?;
    let table = CodeTable::from_csv_path(run.input(&a.codes))?;
    let version = IcdVersion::try_from(version).map_err(|e| anyhow!(e))?;
    let matcher = CodeMatcher::new(&table, version)?;
    let vectors = match (&a.code_vectors, &a.desc_vectors) {
        (Some(c), Some(d)) => Some((load_dense(run.input(c))?, load_dense(run.input(d))?)),
        (None, None) => None,
        _ => bail!("--code-vectors and --desc-vectors go together"),
    };
    let ctx_vectors = vectors.as_ref().map(|(codes, descriptions)| EmbeddingContext { descriptions, codes });
    let mapped: Vec<MappedPrediction> = par_map(&records, ctx.jobs, |r| {
        map_all(r, strategy, &matcher, ctx_vectors.as_ref()).with_context(|| format!("note {}", r.note_id))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let sum = |f: fn(&MappedPrediction) -> usize| mapped.iter().map(f).sum::<usize>();
    let codes = sum(|m| m.items.iter().filter(|i| i.code.is_some()).count());
    let summary = MappingSummary {
        records: mapped.len(),
        descriptions: sum(|m| m.tally.total()),
        exact: sum(|m| m.tally.exact),
        lexical: sum(|m| m.tally.lexical),
        embedding: sum(|m| m.tally.embedding),
        discarded: sum(|m| m.tally.discarded),
        items_after_dedup: sum(|m| m.items.len()),
        discarded_after_dedup: sum(|m| m.items.iter().filter(|i| i.code.is_none()).count()),
        avg_codes_after_dedup: if mapped.is_empty() { 0.0 } else { codes as f64 / mapped.len() as f64 },
    };
    write_jsonl(&run.output("mapped.jsonl"), &mapped)?;
    write_json(&run.output("mapping_summary.json"), &summary)?;
    run.finish()?;
    emit(format!(
        "mapped {} records: {:.2} codes per note after dedup, {} of {} descriptions discarded",
        summary.records, summary.avg_codes_after_dedup, summary.discarded, summary.descriptions
    ));
    Ok(())
}

#[derive(Args)]
pub struct TuneArgs {
    /// Validation score matrix.
    #[arg(long)]
    scores: PathBuf,
    /// Dataset supplying gold labels.
    #[arg(long)]
    dataset: PathBuf,
    /// Sentinel offset [default: 1e-6].
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    out: Out,
}

#[derive(Serialize)]
struct TuneLine {
    class: String,
    threshold: f64,
    case: clinibench::thresholds::TuneCase,
    best_f1: f64,
}

pub fn tune_thresholds(ctx: &Ctx, a: TuneArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let eps: f64 = ctx.pick("epsilon", a.epsilon, DEFAULT_EPSILON)?;
    run.param("epsilon", eps);
    let file = File::open(run.input(&a.scores))?;
    let matrix = read_score_matrix::<f64, _>(BufReader::new(file))?;
    let data = Dataset::load(run.input(&a.dataset))?;
    let labels = data.labels(&data.notes);
    let tv = tune_with_jobs(&matrix, &labels, eps, ctx.jobs)?;
    std::fs::write(run.output("thresholds.json"), tv.to_json() + "\n")?;
    let lines: Vec<TuneLine> = tv
        .report
        .iter()
        .map(|r| TuneLine { class: r.class.clone(), threshold: r.threshold, case: r.case, best_f1: r.best.value() })
        .collect();
    write_json(&run.output("tuning.json"), &lines)?;
    run.finish()?;
    emit(format!("tuned {} thresholds on {} examples", lines.len(), matrix.rows()));
    Ok(())
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Split part to evaluate [default: test].
    #[arg(long)]
    part: Option<String>,
    /// Top-n cutoff [default: 20].
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated token-count bucket edges.
    #[arg(long)]
    buckets: Option<String>,
    /// Ranked (`codes`) or mapped (`items`) predictions JSONL.
    #[arg(long, conflicts_with = "scores")]
    predictions: Option<PathBuf>,
    /// Encoder score matrix.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Tuned thresholds for `--scores`; plain top-n ranking when absent.
    #[arg(long, requires = "scores")]
    thresholds: Option<PathBuf>,
    /// Generation records, for output-quality diagnostics.
    #[arg(long)]
    generations: Option<PathBuf>,
    #[command(flatten)]
    out: Out,
}

fn read_predictions(path: &std::path::Path) -> Result<(Vec<RankedPrediction>, Option<Vec<MappedPrediction>>)> {
    let raw: Vec<serde_json::Value> = read_jsonl(path)?;
    if raw.first().is_some_and(|v| v.get("items").is_some()) {
        let mapped: Vec<MappedPrediction> = raw
            .into_iter()
            .map(serde_json::from_value)
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: malformed mapped prediction", path.display()))?;
        Ok((mapped.iter().map(RankedPrediction::from).collect(), Some(mapped)))
    } else {
        let ranked = raw
            .into_iter()
            .map(|v| serde_json::from_value::<RankedPrediction>(v).map(|p| RankedPrediction::new(p.note_id, p.codes)))
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: malformed prediction", path.display()))?;
        Ok((ranked, None))
    }
}

pub fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let part: String = ctx.pick("part", a.part, "test".into())?;
    let n: usize = ctx.pick("n", a.n, 20)?;
    let buckets = parse_usize_list(&ctx.pick("buckets", a.buckets, String::new())?)?;
    run.param("part", &part);
    run.param("n", n);
    run.param("buckets", &buckets);

    let data = Dataset::load(run.input(&a.dataset))?;
    let split = load_split(run.input(&a.split))?;
    let notes = data.part(&split, &part)?;
    let gold = data.labels(notes.iter().copied());
    let tokens: HashMap<String, usize> =
        notes.iter().map(|n| (n.id().to_owned(), whitespace_token_count(&n.note.full_text()))).collect();
    let cfg = EvalConfig::from_split(&split, n).with_buckets(buckets);

    let (preds, mapped) = match (&a.predictions, &a.scores) {
        (Some(p), None) => read_predictions(run.input(p))?,
        (None, Some(s)) => {
            let matrix = read_score_matrix::<f64, _>(BufReader::new(File::open(run.input(s))?))?;
            let tuned = a.thresholds.is_some();
            run.param("tuned", tuned);
            let tv = match &a.thresholds {
                Some(t) => ThresholdVector::from_json(&read_text(run.input(t))?)?,
                None => ThresholdVector {
                    thresholds: matrix.class_ids().iter().map(|c| (c.clone(), f64::INFINITY)).collect(),
                    epsilon: DEFAULT_EPSILON,
                    report: Vec::new(),
                },
            };
            let applied = apply(&matrix, &tv)?;
            let preds = applied
                .iter()
                .map(|p| if tuned { RankedPrediction::tuned(p) } else { RankedPrediction::untuned(p, n) })
                .collect();
            (preds, None)
        }
        _ => bail!("give exactly one of --predictions or --scores"),
    };

    let mut report: MetricReport<f64> = score_predictions(&preds, &gold, &cfg, Some(&tokens))?;
    if let Some(path) = &a.generations {
        let records: Vec<GenerationRecord> = read_jsonl(run.input(path))?;
        let valid = records.iter().filter(|r| r.valid_json).count();
        report.valid_json_rate = Some(if records.is_empty() { 0.0 } else { valid as f64 / records.len() as f64 });
        if let Some(mapped) = &mapped {
            let diag = generation_diagnostics::<f64, _>(&records, mapped, &gold)?;
            write_json(&run.output("diagnostics.json"), &diag)?;
        }
    }
    write_json(&run.output("report.json"), &report)?;
    run.finish()?;
    emit(format!(
        "macro R {:.4}  P {:.4}  F1 {:.4}  MAP {:.4}  MD Acc {:.4}  micro F1 {:.4}",
        report.macro_recall, report.macro_precision, report.macro_f1, report.map, report.md_acc, report.micro_f1
    ));
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Report files, optionally labeled `dataset/model/setting=PATH`.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<String>,
    #[command(flatten)]
    out: Out,
}

pub fn report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let mut labels = Vec::new();
    let mut reports: Vec<MetricReport<f64>> = Vec::new();
    for spec in &a.reports {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_owned(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let dir = p.parent().and_then(|d| d.file_name()).map(|d| d.to_string_lossy().into_owned());
                (dir.unwrap_or_else(|| spec.clone()), p)
            }
        };
        let text = read_text(run.input(&path))?;
        reports.push(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
        let mut parts = label.splitn(3, '/').map(str::to_owned);
        labels.push([0; 3].map(|_| parts.next().unwrap_or_default()));
    }
    let mean = mean_reports(&reports)?;
    let mut rows: Vec<(&str, &str, &str, &MetricReport<f64>)> =
        labels.iter().zip(&reports).map(|(l, r)| (l[0].as_str(), l[1].as_str(), l[2].as_str(), r)).collect();
    rows.push(("mean", "", "", &mean));
    write_csv(File::create(run.output("table.csv"))?, &rows)?;
    write_json(&run.output("mean.json"), &mean)?;
    run.finish()?;
    emit(format!("combined {} reports", reports.len()));
    Ok(())
}
