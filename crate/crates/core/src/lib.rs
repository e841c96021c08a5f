//! Program-comprehension knowledge graph.
//!
//! Source files, comments, commit and bug exports and runtime traces are
//! turned into knowledge primitives, linked into a provenance-carrying triple
//! graph, and queried through entity, list, template and free-form queries
//! whose answers carry rule-driven alerts (data races, similar defects,
//! change provenance, stale comments).

pub mod concepts;
pub mod error;
pub mod extraction;
pub mod graph;
pub mod history;
pub mod ids;
pub mod pipeline;
pub mod query;
pub mod scalar;
pub mod smart;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// PageRank table over `f64` scores.
pub type RankTable = graph::Ranks<f64>;
/// Strategy label with an `f64` score.
pub type ConceptLabel = concepts::Label<f64>;
/// Class-by-feature weight matrix over `f64`.
pub type StrategyWeights = concepts::Weights<f64>;
/// PageRank parameters over `f64`.
pub type PageRankConfig = graph::PageRankConfig<f64>;
