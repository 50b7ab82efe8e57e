//! Context-graph engine for AI-assisted testing.
//!
//! The engine keeps a dependency graph of the codebase whose nodes carry
//! multi-factor context embeddings, keeps it synchronized with edits, ranks
//! the most relevant context for every change, assembles a four-part JSON
//! prompt for a pluggable model backend and runs the suggestion loop
//! (bug detection, fix suggestion, test generation) whose outcomes are fed
//! back into the graph.
//!
//! Module map:
//!
//! - [`codegraph`]: file-level dependency graph, change events, structural queries.
//! - [`embedding`]: context embeddings and diminishing-weight propagation.
//! - [`retrieval`]: node scoring and token-budgeted snippet selection.
//! - [`prompt`]: prompt assembly and history aggregation.
//! - [`gateway`]: model backends (deterministic mock, HTTP chat adapter).
//! - [`orchestrator`]: the engine, debouncing, change sources, review.
//! - [`coverage`]: criticality, overall/critical coverage and evaluation metrics.
//! - [`bench`]: synthetic fault corpora and proposed-vs-baseline experiments.
//! - [`store`]: on-disk layout, append-only logs and graph snapshots.

pub mod bench;
pub mod codegraph;
pub mod config;
pub mod coverage;
pub mod embedding;
pub mod error;
pub mod gateway;
pub mod orchestrator;
pub mod prompt;
pub mod retrieval;
pub mod store;
pub mod time;

pub use config::EngineConfig;
pub use error::{Error, Result};

/// Token estimate used everywhere: one token per four bytes, rounded up.
pub fn estimate_tokens(bytes: usize) -> usize {
    bytes.div_ceil(4)
}
