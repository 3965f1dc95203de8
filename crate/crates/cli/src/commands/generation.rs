use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use clinibench::corpus::CodeTable;
use clinibench::guided::{
    compile_cached, GenerationBudget, GenerationRecord, MaskAutomaton, SchemaConfig, SchemaMode,
    Vocabulary,
};
use clinibench::inference::{
    generate_all, DecodeSpec, HttpSource, LogitsSource, RandomLogits, RetryPolicy, ScriptedLogits,
    MAX_STEP_TOKENS,
};
use clinibench::prompt::{assemble, Demonstration, PromptMode, Templates};
use clinibench::retrieval::RetrievalResult;

use crate::config::Ctx;
use crate::manifest::Run;
use crate::util::{emit, load_split, par_map, read_jsonl, write_jsonl, Dataset};
use crate::Out;

/// Environment variable naming the automaton cache directory.
pub const CACHE_ENV: &str = "CLINIBENCH_CACHE";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRecord {
    pub note_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRecord {
    pub note_id: String,
    pub text: String,
}

#[derive(Args)]
pub struct PromptArgs {
    /// zero_shot, zero_shot_cot or few_shot [default: few_shot].
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Code table, for demonstration descriptions.
    #[arg(long)]
    codes: Option<PathBuf>,
    /// Split part to build prompts for [default: test].
    #[arg(long)]
    queries: Option<String>,
    /// Retrieved neighbors (few-shot only).
    #[arg(long)]
    retrieval: Option<PathBuf>,
    /// Demonstrations per prompt: 1, 3 or 5 [default: 5].
    #[arg(long)]
    shots: Option<usize>,
    /// TOML or JSON template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Append a one-line JSON format instruction to zero-shot prompts.
    #[arg(long)]
    format_hint: bool,
    #[command(flatten)]
    out: Out,
}

pub fn prompt(ctx: &Ctx, a: PromptArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let mode: PromptMode = ctx.pick("mode", a.mode, "few_shot".into())?.parse()?;
    let queries: String = ctx.pick("queries", a.queries, "test".into())?;
    let shots: usize = ctx.pick("shots", a.shots, 5)?;
    let format_hint = a.format_hint || ctx.pick("format_hint", None, false)?;
    run.param("mode", mode);
    run.param("queries", &queries);
    run.param("format_hint", format_hint);

    let mut templates = match &a.templates {
        Some(p) => Templates::load(run.input(p))?,
        None => Templates::default(),
    };
    if format_hint && templates.format_hint.is_none() {
        templates = templates.with_format_hint();
    }
    let data = Dataset::load(run.input(&a.dataset))?;
    let split = load_split(run.input(&a.split))?;
    let notes = data.part(&split, &queries)?;

    let neighbors: HashMap<String, RetrievalResult<f64>> = if mode == PromptMode::FewShot {
        run.param("shots", shots);
        let Some(path) = &a.retrieval else {
            bail!("few-shot prompts need --retrieval");
        };
        read_jsonl::<RetrievalResult<f64>>(run.input(path))?
            .into_iter()
            .map(|r| (r.query_id.clone(), r))
            .collect()
    } else {
        HashMap::new()
    };
    let table = match &a.codes {
        Some(p) => Some(CodeTable::from_csv_path(run.input(p))?),
        None if mode == PromptMode::FewShot => bail!("few-shot prompts need --codes"),
        None => None,
    };

    let mut out = Vec::with_capacity(notes.len());
    for note in notes {
        let demos = if mode == PromptMode::FewShot {
            let r = neighbors
                .get(note.id())
                .with_context(|| format!("no retrieval result for note {}", note.id()))?;
            let table = table.as_ref().expect("checked above");
            r.ids()
                .take(shots)
                .map(|id| Ok(Demonstration::from_neighbor(data.get(id)?, table)?))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let prompt = assemble(mode, &note.note.full_text(), &demos, &templates)
            .with_context(|| format!("note {}", note.id()))?;
        out.push(PromptRecord { note_id: note.id().to_owned(), prompt });
    }
    write_jsonl(&run.output("prompts.jsonl"), &out)?;
    run.finish()?;
    emit(format!("assembled {} {mode} prompts", out.len()));
    Ok(())
}

fn schema_mode(s: String) -> Result<SchemaMode> {
    s.parse().map_err(|e: String| anyhow!(e))
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn load_automaton(path: Option<&Path>, regex: &str, vocab: &Vocabulary) -> Result<MaskAutomaton> {
    match path {
        Some(p) => {
            let a = MaskAutomaton::load(p)?;
            if !a.matches_regex(regex) || a.vocab_hash() != vocab.hash() {
                bail!("{} was compiled for a different schema or vocabulary", p.display());
            }
            Ok(a)
        }
        None => Ok(compile_cached(regex, vocab, cache_dir().as_deref())?),
    }
}

#[derive(Args)]
pub struct CompileArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// plain or cot [default: plain].
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    out: Out,
}

pub fn compile_schema(ctx: &Ctx, a: CompileArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let mode = schema_mode(ctx.pick("mode", a.mode, "plain".into())?)?;
    run.param("mode", mode);
    let vocab = Vocabulary::load(run.input(&a.vocab))?;
    let regex = SchemaConfig::default().regex(mode);
    let automaton = load_automaton(None, &regex, &vocab)?;
    automaton.save(&run.output("automaton.cbfa"))?;
    std::fs::write(run.output("schema.regex"), &regex)?;
    run.finish()?;
    emit(format!("{} token-level states over {} tokens", automaton.state_count(), vocab.len()));
    Ok(())
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Prompts JSONL from `prompt`.
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// plain or cot [default: plain].
    #[arg(long)]
    mode: Option<String>,
    /// Logits server base URL.
    #[arg(long, conflicts_with = "mock")]
    endpoint: Option<String>,
    /// In-process source instead of a server: uniform or scripted.
    #[arg(long)]
    mock: Option<String>,
    /// Scripted outputs JSONL `{"note_id", "text"}` for `--mock scripted`.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Let the server enforce the schema regex itself via /generate.
    #[arg(long, requires = "endpoint")]
    passthrough: bool,
    /// Precompiled automaton from `compile-schema`.
    #[arg(long)]
    automaton: Option<PathBuf>,
    /// Generation budget in tokens [default: 1500].
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Attempts per request [default: 3].
    #[arg(long)]
    retries: Option<usize>,
    /// Per-request timeout in seconds [default: 30].
    #[arg(long)]
    timeout: Option<u64>,
    #[command(flatten)]
    out: Out,
}

pub fn generate(ctx: &Ctx, a: GenerateArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let mode = schema_mode(ctx.pick("mode", a.mode, "plain".into())?)?;
    let max_tokens: usize = ctx.pick("max_tokens", a.max_tokens, MAX_STEP_TOKENS)?;
    let endpoint: Option<String> = ctx.opt("endpoint", a.endpoint)?;
    let mock: Option<String> = ctx.opt("mock", a.mock)?;
    let retry = RetryPolicy {
        attempts: ctx.pick("retries", a.retries, 3)?,
        timeout: Duration::from_secs(ctx.pick("timeout", a.timeout, 30)?),
        ..RetryPolicy::default()
    };
    run.param("mode", mode);
    run.param("max_tokens", max_tokens);
    run.param("endpoint", &endpoint);
    run.param("mock", &mock);
    run.param("passthrough", a.passthrough);

    let prompts: Vec<PromptRecord> = read_jsonl(run.input(&a.prompts))?;
    let vocab = Vocabulary::load(run.input(&a.vocab))?;
    let schema = SchemaConfig::default();
    let regex = schema.regex(mode);
    let jobs: Vec<(String, String)> = prompts.iter().map(|p| (p.note_id.clone(), p.prompt.clone())).collect();

    let records: Vec<GenerationRecord> = if a.passthrough {
        let client = HttpSource::new(endpoint.as_deref().expect("clap enforces --endpoint"), retry);
        par_map(&jobs, ctx.jobs, |(id, prompt)| {
            client
                .generate_passthrough(prompt, &regex, max_tokens, mode, &schema)
                .map(|mut r| {
                    r.note_id = id.clone();
                    r
                })
                .with_context(|| format!("note {id}"))
        })
        .into_iter()
        .collect::<Result<_>>()?
    } else {
        let automaton_path = a.automaton.as_deref().map(|p| run.input(p));
        let automaton = load_automaton(automaton_path, &regex, &vocab)?;
        let spec = DecodeSpec {
            automaton: &automaton,
            vocab: &vocab,
            budget: GenerationBudget { max_tokens, ..GenerationBudget::default() },
            mode,
            schema: &schema,
        };
        let source: Box<dyn LogitsSource> = match (endpoint.as_deref(), mock.as_deref()) {
            (Some(url), None) => Box::new(HttpSource::new(url, retry)),
            (None, Some("uniform")) => Box::new(RandomLogits::new(&vocab, ctx.seed)),
            (None, Some("scripted")) => {
                let Some(path) = &a.targets else {
                    bail!("--mock scripted needs --targets");
                };
                let by_note: HashMap<String, String> = read_jsonl::<TargetRecord>(run.input(path))?
                    .into_iter()
                    .map(|t| (t.note_id, t.text))
                    .collect();
                let pairs = prompts
                    .iter()
                    .map(|p| {
                        let text = by_note
                            .get(&p.note_id)
                            .with_context(|| format!("no scripted target for note {}", p.note_id))?;
                        Ok((p.prompt.clone(), text.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Box::new(ScriptedLogits::new(&vocab, pairs)?)
            }
            (None, Some(other)) => bail!("unknown mock {other:?} (uniform or scripted)"),
            (None, None) => bail!("give --endpoint or --mock"),
            (Some(_), Some(_)) => bail!("--endpoint and --mock are exclusive"),
        };
        generate_all(source.as_ref(), &jobs, spec, ctx.jobs)
            .into_iter()
            .zip(&jobs)
            .map(|(r, (id, _))| r.with_context(|| format!("note {id}")))
            .collect::<Result<_>>()?
    };
    write_jsonl(&run.output("generations.jsonl"), &records)?;
    run.finish()?;
    let valid = records.iter().filter(|r| r.valid_json).count();
    emit(format!("generated {} outputs, {valid} schema-valid", records.len()));
    Ok(())
}

#[derive(Args)]
pub struct ReplayArgs {
    /// JSONL of `{"note_id", "raw"}` produced elsewhere.
    #[arg(long)]
    input: PathBuf,
    /// plain or cot [default: plain].
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    out: Out,
}

pub fn replay(ctx: &Ctx, a: ReplayArgs) -> Result<()> {
    let mut run = Run::start(ctx, &a.out.out)?;
    let mode = schema_mode(ctx.pick("mode", a.mode, "plain".into())?)?;
    run.param("mode", mode);
    let records: Vec<GenerationRecord> =
        clinibench::inference::replay(run.input(&a.input), mode, SchemaConfig::default())?
            .collect::<Result<_, _>>()?;
    write_jsonl(&run.output("generations.jsonl"), &records)?;
    run.finish()?;
    let valid = records.iter().filter(|r| r.valid_json).count();
    emit(format!("replayed {} outputs, {valid} schema-valid", records.len()));
    Ok(())
}
