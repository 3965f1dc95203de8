use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::Args;

use clinibench::corpus::{
    corpus_stats, ingest_notes, stratified_split, synthesize, write_dataset, CareModule, CodeTable,
    IcdVersion, SplitRatios, SynthConfig,
};
use clinibench::guided::Vocabulary;

use crate::config::Ctx;
use crate::manifest::Run;
use crate::util::{emit, load_split, write_json, write_jsonl, Dataset};
use crate::Out;

#[derive(Args)]
pub struct SynthArgs {
    /// Number of notes [default: 300].
    #[arg(long)]
    notes: Option<usize>,
    /// Number of 3-character categories [default: 50].
    #[arg(long)]
    codes: Option<usize>,
    /// ICD version, 9 or 10 [default: 10].
    #[arg(long)]
    icd_version: Option<u8>,
    /// hosp or icu [default: hosp].
    #[arg(long)]
    module: Option<String>,
    /// Extra multi-byte tokens in the emitted vocabulary [default: 300].
    #[arg(long)]
    vocab_merges: Option<usize>,
    #[command(flatten)]
    out: Out,
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let defaults = SynthConfig::default();
    let version: u8 = ctx.pick("icd_version", a.icd_version, 10)?;
    let module: String = ctx.pick("module", a.module, "hosp".into())?;
    let cfg = SynthConfig {
        notes: ctx.pick("notes", a.notes, defaults.notes)?,
        codes: ctx.pick("codes", a.codes, defaults.codes)?,
        seed: ctx.seed,
        version: IcdVersion::try_from(version).map_err(|e| anyhow!(e))?,
        module: module.parse::<CareModule>().map_err(|e| anyhow!(e))?,
        ..defaults
    };
    let merges = ctx.pick("vocab_merges", a.vocab_merges, 300)?;
    run.param("notes", cfg.notes);
    run.param("codes", cfg.codes);
    run.param("icd_version", version);
    run.param("module", &module);
    run.param("vocab_merges", merges);

    let corpus = synthesize(&cfg)?;
    write_jsonl(&run.output("notes.jsonl"), &corpus.notes)?;
    corpus.codes.write_csv(BufWriter::new(File::create(run.output("codes.csv"))?))?;
    write_json(&run.output("signatures.json"), &corpus.signatures)?;
    std::fs::write(run.output("vocab.jsonl"), Vocabulary::synthetic(merges, ctx.seed).to_jsonl())?;
    run.finish()?;
    emit(format!("synthesized {} notes over {} categories", corpus.notes.len(), cfg.codes));
    Ok(())
}

#[derive(Args)]
pub struct BuildArgs {
    /// Raw notes JSONL.
    #[arg(long)]
    notes: PathBuf,
    /// Code table CSV.
    #[arg(long)]
    codes: PathBuf,
    #[command(flatten)]
    out: Out,
}

pub fn build_dataset(ctx: &Ctx, a: BuildArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let table = CodeTable::from_csv_path(run.input(&a.codes))?;
    let notes = ingest_notes(run.input(&a.notes), &table)?;
    write_dataset(&notes, BufWriter::new(File::create(run.output("dataset.jsonl"))?))?;
    run.finish()?;
    emit(format!("wrote {} notes", notes.len()));
    Ok(())
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// train,val,test fractions [default: 0.7,0.1,0.2].
    #[arg(long)]
    ratios: Option<String>,
    #[command(flatten)]
    out: Out,
}

pub fn split(ctx: &Ctx, a: SplitArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let ratios: String = ctx.pick("ratios", a.ratios, "0.7,0.1,0.2".into())?;
    run.param("ratios", &ratios);
    let data = Dataset::load(run.input(&a.dataset))?;
    let split = stratified_split(&data.notes, SplitRatios::parse(&ratios)?, ctx.seed)?;
    std::fs::write(run.output("split.json"), split.to_json())?;
    run.finish()?;
    println!(
        "train {} / val {} / test {}; registry {} codes",
        split.train_ids.len(),
        split.val_ids.len(),
        split.test_ids.len(),
        split.label_registry.len()
    );
    Ok(())
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[command(flatten)]
    out: Out,
}

pub fn stats(ctx: &Ctx, a: StatsArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let data = Dataset::load(run.input(&a.dataset))?;
    let split = load_split(run.input(&a.split))?;
    let stats = corpus_stats(&split, &data.notes)?;
    write_json(&run.output("stats.json"), &stats)?;
    run.finish()?;
    emit(serde_json::to_string_pretty(&stats)?);
    Ok(())
}
