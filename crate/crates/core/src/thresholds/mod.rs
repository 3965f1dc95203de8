//! Per-class decision thresholds tuned on validation scores by maximizing F1.

mod matrix;
mod tune;

pub use matrix::{read_score_matrix, write_score_matrix, ScoreHeader, ScoreMatrix};
pub use tune::{
    apply, tune, tune_class, tune_with_jobs, ClassTuning, F1Ratio, ThresholdVector,
    ThresholdedPrediction, TuneCase, DEFAULT_EPSILON,
};

#[derive(Debug, thiserror::Error)]
pub enum ThresholdError {
    #[error("score matrix has {rows} rows and {cols} classes but {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("non-finite score for example {example}, class {class}")]
    NonFinite { example: String, class: String },
    #[error("duplicate {kind} id {id}")]
    Duplicate { kind: &'static str, id: String },
    #[error("no labels for example {0}")]
    MissingLabels(String),
    #[error("threshold classes do not match score classes: {0}")]
    ClassMismatch(String),
    #[error("score matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
