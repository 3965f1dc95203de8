//! Driving constrained decoding against a model that exposes raw logits one
//! step at a time, plus replay of outputs generated elsewhere.

mod client;
mod mock;
mod replay;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::guided::{
    parse_output_with, GenerationBudget, GenerationRecord, GuidedError, MaskAutomaton,
    SchemaConfig, SchemaMode, Vocabulary,
};

pub use client::{HttpSource, RetryPolicy};
pub use mock::{RandomLogits, ScriptedLogits};
pub use replay::{replay, ReplayReader};

pub const MAX_STEP_TOKENS: usize = 1500;

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("decoding: {0}")]
    DecodeDeadEnd(#[from] GuidedError),
    #[error("server vocabulary {found} does not match local vocabulary {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenResponse {
    pub session_id: String,
    pub vocab_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub session_id: String,
    /// Sent with the first step of a session only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub token_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub logits: Vec<f32>,
}

/// Anything that can hand out next-token logits for a session.
pub trait LogitsSource: Sync {
    fn open(&self, prompt: &str) -> Result<OpenResponse, InferenceError>;
    fn step(&self, request: &StepRequest) -> Result<StepResponse, InferenceError>;
}

/// Decoding settings shared by every session of a run.
#[derive(Debug, Clone, Copy)]
pub struct DecodeSpec<'a> {
    pub automaton: &'a MaskAutomaton,
    pub vocab: &'a Vocabulary,
    pub budget: GenerationBudget,
    pub mode: SchemaMode,
    pub schema: &'a SchemaConfig,
}

fn check_logits(logits: &[f32], expected: usize) -> Result<(), InferenceError> {
    if logits.len() != expected {
        return Err(InferenceError::Protocol(format!(
            "expected {expected} logits, got {}",
            logits.len()
        )));
    }
    if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
        return Err(InferenceError::Protocol(format!("non-finite logit at {i}")));
    }
    Ok(())
}

/// Greedy constrained generation for one prompt: open a session, then loop
/// step request → mask → argmax until the automaton finishes.
pub fn generate<L: LogitsSource + ?Sized>(
    source: &L,
    prompt: &str,
    spec: DecodeSpec<'_>,
) -> Result<GenerationRecord, InferenceError> {
    let started = Instant::now();
    let open = source.open(prompt)?;
    let expected = spec.vocab.hash_hex();
    if open.vocab_hash != expected {
        return Err(InferenceError::VocabMismatch {
            expected,
            found: open.vocab_hash,
        });
    }
    let budget = GenerationBudget {
        max_tokens: spec.budget.max_tokens.min(MAX_STEP_TOKENS),
        ..spec.budget
    };
    let mut session = spec.automaton.session(budget);
    let mut first = true;
    let tokens = session.run(|generated| {
        let request = StepRequest {
            session_id: open.session_id.clone(),
            prompt: first.then(|| prompt.to_owned()),
            token_ids: generated.to_vec(),
        };
        first = false;
        let response = source.step(&request)?;
        check_logits(&response.logits, spec.vocab.len())?;
        Ok::<_, InferenceError>(response.logits)
    })?;
    let text = String::from_utf8_lossy(&spec.vocab.decode(&tokens)).into_owned();
    let mut record = parse_output_with(&text, spec.mode, spec.schema);
    record.tokens = Some(tokens.len());
    record.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    Ok(record)
}

/// Generate for many `(note_id, prompt)` pairs with at most `concurrency`
/// sessions in flight. Results come back in input order.
pub fn generate_all<L: LogitsSource + ?Sized>(
    source: &L,
    jobs: &[(String, String)],
    spec: DecodeSpec<'_>,
    concurrency: usize,
) -> Vec<Result<GenerationRecord, InferenceError>> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<GenerationRecord, InferenceError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..concurrency.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((note_id, prompt)) = jobs.get(i) else {
                    break;
                };
                let result = generate(source, prompt, spec).map(|mut r| {
                    r.note_id = note_id.clone();
                    r
                });
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every job ran"))
        .collect()
}
