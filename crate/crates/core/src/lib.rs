//! Benchmark engine for predicting discharge diagnoses from admission notes.
//!
//! The crate covers the whole evaluation path: building and splitting labeled
//! corpora ([`corpus`]), retrieving similar patients ([`retrieval`]),
//! assembling prompts ([`prompt`]), constraining generation with token-mask
//! automata ([`guided`]), talking to a step-wise logits server
//! ([`inference`]), mapping generated text to ICD classes ([`mapping`]),
//! tuning per-class thresholds ([`thresholds`]) and scoring ([`metrics`]).
//!
//! Scoring code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common choices.

pub mod corpus;
pub mod guided;
pub mod inference;
pub mod mapping;
pub mod metrics;
pub mod prompt;
pub mod retrieval;
pub mod scalar;
pub mod text;
pub mod thresholds;

pub use scalar::Scalar;

pub type Bm25IndexF32 = retrieval::Bm25Index<f32>;
pub type Bm25IndexF64 = retrieval::Bm25Index<f64>;
pub type DenseIndexF32 = retrieval::DenseIndex<f32>;
pub type DenseIndexF64 = retrieval::DenseIndex<f64>;
pub type ScoreMatrixF32 = thresholds::ScoreMatrix<f32>;
pub type ScoreMatrixF64 = thresholds::ScoreMatrix<f64>;
pub type ThresholdVectorF32 = thresholds::ThresholdVector<f32>;
pub type ThresholdVectorF64 = thresholds::ThresholdVector<f64>;
pub type MetricReportF32 = metrics::MetricReport<f32>;
pub type MetricReportF64 = metrics::MetricReport<f64>;
