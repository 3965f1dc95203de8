//! Guided decoding: the output-schema regex, its compilation to a token-level
//! mask automaton over a model vocabulary, and greedy masked stepping.

mod automaton;
mod cache;
mod dfa;
mod output;
mod schema;
mod vocab;

pub use automaton::{DecodeSession, GenerationBudget, MaskAutomaton, StepChoice};
pub use cache::{cache_path, compile_cached, MAGIC};
pub use dfa::ByteDfa;
pub use output::{parse_output, parse_output_with, GenerationRecord};
pub use schema::{schema_regex, SchemaConfig, SchemaMode, SAFE_CHAR_CLASS};
pub use vocab::Vocabulary;

#[derive(Debug, thiserror::Error)]
pub enum GuidedError {
    #[error("regex: {0}")]
    RegexParse(String),
    #[error("regex matches nothing")]
    EmptyLanguage,
    #[error("vocabulary cannot continue from state {state}; it needs one of bytes {needed:?}")]
    VocabCoverage { state: u32, needed: Vec<u8> },
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("no token allowed in state {state}")]
    NoAllowedToken { state: u32 },
    #[error("token budget exhausted after {tokens} tokens outside an accepting state")]
    BudgetExhaustedInvalid { tokens: usize },
    #[error("expected {expected} logits, got {found}")]
    LogitsLength { expected: usize, found: usize },
    #[error("automaton cache: {0}")]
    CacheFormat(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
