//! `clinibench`: run the benchmark pipeline stage by stage.
//!
//! Every subcommand writes its outputs and a `manifest.json` into `--out`.
//! Exit codes: 0 success, 1 runtime error (JSON message on stderr), 2 usage
//! error.

mod commands;
mod config;
mod manifest;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Ctx};

#[derive(Parser)]
#[command(name = "clinibench", version, about = "Discharge-diagnosis prediction benchmark pipeline")]
struct Cli {
    /// TOML file with defaults, per subcommand table or top level.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Out {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, code table and vocabulary.
    Synth(commands::data::SynthArgs),
    /// Validate raw notes against a code table and write a normalized dataset.
    BuildDataset(commands::data::BuildArgs),
    /// Stratified train/val/test split with label registry and tertiles.
    Split(commands::data::SplitArgs),
    /// Corpus statistics.
    Stats(commands::data::StatsArgs),
    /// Build a BM25 index over training notes.
    Index(commands::retrieval::IndexArgs),
    /// Retrieve similar training patients for each query note.
    Retrieve(commands::retrieval::RetrieveArgs),
    /// Majority-vote predictions from retrieved neighbors.
    Vote(commands::retrieval::VoteArgs),
    /// Assemble prompts.
    Prompt(commands::generation::PromptArgs),
    /// Compile the output schema into a token-mask automaton.
    CompileSchema(commands::generation::CompileArgs),
    /// Guided generation against a logits server or an in-process mock.
    Generate(commands::generation::GenerateArgs),
    /// Validate externally generated outputs.
    Replay(commands::generation::ReplayArgs),
    /// Map generated descriptions to ICD categories.
    Map(commands::evaluation::MapArgs),
    /// Tune per-class thresholds on validation scores.
    TuneThresholds(commands::evaluation::TuneArgs),
    /// Score predictions against gold labels.
    Score(commands::evaluation::ScoreArgs),
    /// Combine metric reports into a table and an unweighted mean.
    Report(commands::evaluation::ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::BuildDataset(_) => "build-dataset",
            Command::Split(_) => "split",
            Command::Stats(_) => "stats",
            Command::Index(_) => "index",
            Command::Retrieve(_) => "retrieve",
            Command::Vote(_) => "vote",
            Command::Prompt(_) => "prompt",
            Command::CompileSchema(_) => "compile-schema",
            Command::Generate(_) => "generate",
            Command::Replay(_) => "replay",
            Command::Map(_) => "map",
            Command::TuneThresholds(_) => "tune-thresholds",
            Command::Score(_) => "score",
            Command::Report(_) => "report",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    let ctx = Ctx::new(config, cli.command.name(), cli.seed, cli.jobs)?;
    use commands::*;
    match cli.command {
        Command::Synth(a) => data::synth(&ctx, a),
        Command::BuildDataset(a) => data::build_dataset(&ctx, a),
        Command::Split(a) => data::split(&ctx, a),
        Command::Stats(a) => data::stats(&ctx, a),
        Command::Index(a) => retrieval::index(&ctx, a),
        Command::Retrieve(a) => retrieval::retrieve(&ctx, a),
        Command::Vote(a) => retrieval::vote(&ctx, a),
        Command::Prompt(a) => generation::prompt(&ctx, a),
        Command::CompileSchema(a) => generation::compile_schema(&ctx, a),
        Command::Generate(a) => generation::generate(&ctx, a),
        Command::Replay(a) => generation::replay(&ctx, a),
        Command::Map(a) => evaluation::map(&ctx, a),
        Command::TuneThresholds(a) => evaluation::tune_thresholds(&ctx, a),
        Command::Score(a) => evaluation::score(&ctx, a),
        Command::Report(a) => evaluation::report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let command = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let msg = serde_json::json!({ "error": chain[0], "subcommand": command, "causes": &chain[1..] });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
