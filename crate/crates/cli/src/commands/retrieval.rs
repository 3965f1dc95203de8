use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use clinibench::corpus::LabeledNote;
use clinibench::metrics::RankedPrediction;
use clinibench::retrieval::{
    gold_heuristic, majority_vote, random_retrieve, read_vector_file, Bm25Index, DenseIndex,
    RetrievalResult,
};

use crate::config::Ctx;
use crate::manifest::Run;
use crate::util::{emit, load_split, par_map, read_jsonl, read_text, write_jsonl, Dataset};
use crate::Out;

#[derive(Args)]
pub struct IndexArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Split part to index [default: train].
    #[arg(long)]
    part: Option<String>,
    #[command(flatten)]
    out: Out,
}

fn bm25_over(notes: &[&LabeledNote]) -> Result<Bm25Index<f64>> {
    Ok(Bm25Index::build(notes.iter().map(|n| (n.id().to_owned(), n.note.full_text())))?)
}

pub fn index(ctx: &Ctx, a: IndexArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let part: String = ctx.pick("part", a.part, "train".into())?;
    run.param("part", &part);
    let data = Dataset::load(run.input(&a.dataset))?;
    let split = load_split(run.input(&a.split))?;
    let index = bm25_over(&data.part(&split, &part)?)?;
    std::fs::write(run.output("bm25.json"), serde_json::to_string(&index)?)?;
    run.finish()?;
    emit(format!("indexed {} documents", index.doc_ids().len()));
    Ok(())
}

#[derive(Args)]
pub struct RetrieveArgs {
    /// bm25, dense, gold or random [default: bm25].
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Split part supplying the queries [default: test].
    #[arg(long)]
    queries: Option<String>,
    /// Neighbors per query [default: 5].
    #[arg(long)]
    k: Option<usize>,
    /// Prebuilt BM25 index; built over the training notes when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Note vectors for dense retrieval.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Gold heuristic over full codes instead of 3-character categories.
    #[arg(long)]
    full_codes: bool,
    #[command(flatten)]
    out: Out,
}

fn labels_of(n: &LabeledNote, full_codes: bool) -> &Vec<String> {
    if full_codes {
        &n.full_labels
    } else {
        &n.labels
    }
}

pub fn retrieve(ctx: &Ctx, a: RetrieveArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let method: String = ctx.pick("method", a.method, "bm25".into())?;
    let queries: String = ctx.pick("queries", a.queries, "test".into())?;
    let k: usize = ctx.pick("k", a.k, 5)?;
    let full_codes = a.full_codes || ctx.pick("full_codes", None, false)?;
    run.param("method", &method);
    run.param("queries", &queries);
    run.param("k", k);
    run.param("full_codes", full_codes);

    let data = Dataset::load(run.input(&a.dataset))?;
    let split = load_split(run.input(&a.split))?;
    let train = data.part(&split, "train")?;
    let query_notes = data.part(&split, &queries)?;

    let results: Vec<RetrievalResult<f64>> = match method.as_str() {
        "bm25" => {
            let index = match &a.index {
                Some(p) => serde_json::from_str(&read_text(run.input(p))?)
                    .with_context(|| format!("parsing index {}", p.display()))?,
                None => bm25_over(&train)?,
            };
            par_map(&query_notes, ctx.jobs, |q| index.retrieve(q.id(), &q.note.full_text(), k))
                .into_iter()
                .collect::<Result<_, _>>()?
        }
        "dense" => {
            let Some(path) = &a.vectors else {
                bail!("dense retrieval needs --vectors");
            };
            let file = read_vector_file(BufReader::new(File::open(run.input(path))?))?;
            let all = DenseIndex::<f32>::from_vector_file(file)?;
            let pool = all.subset(train.iter().map(|n| n.id()))?;
            let out: Result<Vec<_>> = par_map(&query_notes, ctx.jobs, |q| {
                let v = all.vector(q.id()).with_context(|| format!("no vector for note {}", q.id()))?;
                let r = pool.retrieve(q.id(), v, k)?;
                Ok(RetrievalResult {
                    query_id: r.query_id,
                    ranked: r.ranked.into_iter().map(|(id, s)| (id, s as f64)).collect(),
                })
            })
            .into_iter()
            .collect();
            out?
        }
        "gold" => par_map(&query_notes, ctx.jobs, |q| {
            let query = labels_of(q, full_codes);
            let pool: Vec<(&str, &Vec<String>)> = train.iter().map(|n| (n.id(), labels_of(n, full_codes))).collect();
            gold_heuristic(q.id(), query, pool.iter().map(|(id, l)| (*id, l.iter())), k)
        })
        .into_iter()
        .collect::<Result<_, _>>()?,
        "random" => {
            let ids: Vec<String> = train.iter().map(|n| n.id().to_owned()).collect();
            query_notes
                .iter()
                .map(|q| random_retrieve(q.id(), &ids, k, ctx.seed))
                .collect::<Result<_, _>>()?
        }
        other => bail!("unknown retrieval method {other:?} (bm25, dense, gold or random)"),
    };
    write_jsonl(&run.output("retrieval.jsonl"), &results)?;
    run.finish()?;
    emit(format!("retrieved {k} neighbors for {} queries", results.len()));
    Ok(())
}

#[derive(Args)]
pub struct VoteArgs {
    #[arg(long)]
    retrieval: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Codes per prediction [default: 20].
    #[arg(long)]
    top_n: Option<usize>,
    #[command(flatten)]
    out: Out,
}

pub fn vote(ctx: &Ctx, a: VoteArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let top_n: usize = ctx.pick("top_n", a.top_n, 20)?;
    run.param("top_n", top_n);
    let results: Vec<RetrievalResult<f64>> = read_jsonl(run.input(&a.retrieval))?;
    let data = Dataset::load(run.input(&a.dataset))?;
    let labels = data.labels(&data.notes);
    let preds: Vec<RankedPrediction> = results
        .iter()
        .map(|r| RankedPrediction::new(r.query_id.clone(), majority_vote(r, &labels, top_n)))
        .collect();
    write_jsonl(&run.output("predictions.jsonl"), &preds)?;
    run.finish()?;
    emit(format!("voted for {} queries", preds.len()));
    Ok(())
}
