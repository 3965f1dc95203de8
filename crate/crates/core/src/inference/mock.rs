//! In-process logits sources implementing the step protocol without a server.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{InferenceError, LogitsSource, OpenResponse, StepRequest, StepResponse};
use crate::guided::Vocabulary;

/// Independent uniform `[0, 1)` logits at every step. Each session's stream is
/// seeded from the run seed and the prompt, so results do not depend on how
/// sessions interleave.
pub struct RandomLogits {
    vocab_size: usize,
    vocab_hash: String,
    seed: u64,
    counter: AtomicU64,
    sessions: Mutex<HashMap<String, ChaCha8Rng>>,
}

fn prompt_seed(seed: u64, prompt: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.as_bytes());
    h.finalize().into()
}

impl RandomLogits {
    pub fn new(vocab: &Vocabulary, seed: u64) -> Self {
        RandomLogits {
            vocab_size: vocab.len(),
            vocab_hash: vocab.hash_hex(),
            seed,
            counter: AtomicU64::new(0),
            sessions: Mutex::new(HashMap::new()),
        }
    }
}

impl LogitsSource for RandomLogits {
    fn open(&self, prompt: &str) -> Result<OpenResponse, InferenceError> {
        let id = format!("r{}", self.counter.fetch_add(1, Ordering::Relaxed));
        let rng = ChaCha8Rng::from_seed(prompt_seed(self.seed, prompt));
        self.sessions.lock().unwrap().insert(id.clone(), rng);
        Ok(OpenResponse {
            session_id: id,
            vocab_hash: self.vocab_hash.clone(),
        })
    }

    fn step(&self, request: &StepRequest) -> Result<StepResponse, InferenceError> {
        let mut sessions = self.sessions.lock().unwrap();
        let rng = sessions
            .get_mut(&request.session_id)
            .ok_or_else(|| InferenceError::Protocol(format!("unknown session {}", request.session_id)))?;
        Ok(StepResponse {
            logits: (0..self.vocab_size).map(|_| rng.random::<f32>()).collect(),
        })
    }
}

/// Emits one-hot logits spelling a fixed target text per prompt, then eos.
pub struct ScriptedLogits {
    vocab_size: usize,
    eos_id: u32,
    vocab_hash: String,
    targets: HashMap<String, Vec<u32>>,
    counter: AtomicU64,
    sessions: Mutex<HashMap<String, String>>,
}

impl ScriptedLogits {
    /// `targets` maps prompt text to the exact output the model should spell.
    pub fn new<I>(vocab: &Vocabulary, targets: I) -> Result<Self, InferenceError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let targets = targets
            .into_iter()
            .map(|(prompt, text)| {
                vocab
                    .encode_greedy(text.as_bytes())
                    .map(|ids| (prompt, ids))
                    .ok_or_else(|| InferenceError::Protocol(format!("cannot tokenize target {text:?}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(ScriptedLogits {
            vocab_size: vocab.len(),
            eos_id: vocab.eos_id(),
            vocab_hash: vocab.hash_hex(),
            targets,
            counter: AtomicU64::new(0),
            sessions: Mutex::new(HashMap::new()),
        })
    }
}

impl LogitsSource for ScriptedLogits {
    fn open(&self, prompt: &str) -> Result<OpenResponse, InferenceError> {
        if !self.targets.contains_key(prompt) {
            return Err(InferenceError::Protocol("no scripted target for prompt".into()));
        }
        let id = format!("s{}", self.counter.fetch_add(1, Ordering::Relaxed));
        self.sessions
            .lock()
            .unwrap()
            .insert(id.clone(), prompt.to_owned());
        Ok(OpenResponse {
            session_id: id,
            vocab_hash: self.vocab_hash.clone(),
        })
    }

    fn step(&self, request: &StepRequest) -> Result<StepResponse, InferenceError> {
        let sessions = self.sessions.lock().unwrap();
        let prompt = sessions
            .get(&request.session_id)
            .ok_or_else(|| InferenceError::Protocol(format!("unknown session {}", request.session_id)))?;
        let target = &self.targets[prompt];
        let pos = request.token_ids.len();
        let next = target.get(pos).copied().unwrap_or(self.eos_id);
        let mut logits = vec![0.0; self.vocab_size];
        logits[next as usize] = 1.0;
        Ok(StepResponse { logits })
    }
}
