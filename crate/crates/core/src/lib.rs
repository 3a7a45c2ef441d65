pub mod cli;
pub mod corpus;
pub mod dense;
pub mod embedding;
pub mod error;
pub mod graph;
pub mod ir_metrics;
pub mod llm;
pub mod narrative_metrics;
pub mod pipeline;
pub mod sparse;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
