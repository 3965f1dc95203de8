//! Labeled admission-note corpora: ICD code tables, note ingest, stratified
//! splitting, corpus statistics and a synthetic generator with the same schema.

mod codes;
mod ingest;
mod note;
mod split;
mod stats;
mod synth;

use std::path::PathBuf;

pub use codes::{truncate_code, CodeTable, IcdEntry, IcdVersion};
pub use ingest::{ingest_notes, ingest_records, load_dataset, write_dataset, NoteRecord};
pub use note::{AdmissionNote, AdmissionSection, CareModule, LabeledNote, OUTCOME_SECTIONS};
pub use split::{stratified_split, DatasetSplit, SplitRatios, Tertile, TertileThresholds};
pub use stats::{corpus_stats, corpus_stats_with, CorpusStats};
pub use synth::{synthesize, SynthConfig, SynthCorpus};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("note {note_id}: unknown code {code}")]
    UnknownCode { note_id: String, code: String },
    #[error("note {note_id}: section {section:?} is not known at admission time")]
    ForbiddenSection { note_id: String, section: String },
    #[error("note {note_id}: section {section:?} given twice")]
    DuplicateSection { note_id: String, section: String },
    #[error("note {note_id}: no labels")]
    EmptyLabels { note_id: String },
    #[error("invalid ICD code {0:?}")]
    InvalidCode(String),
    #[error("code table line {line}: {message}")]
    MalformedCodeTable { line: usize, message: String },
    #[error("code {code} ({version}) listed twice in code table")]
    DuplicateCode { code: String, version: IcdVersion },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("need at least 3 notes to split, found {0}")]
    TooFewNotes(usize),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("duplicate note id {0}")]
    DuplicateNoteId(String),
    #[error("unknown note id {0}")]
    UnknownNoteId(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
