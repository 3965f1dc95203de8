pub mod data;
pub mod evaluation;
pub mod generation;
pub mod retrieval;
