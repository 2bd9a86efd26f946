//! Thought-graph generation for gene set annotation.
//!
//! Given a gene set, a chat model is driven through voted, breadth-first
//! expansion into a tree of biological-process terms whose edges carry Gene
//! Ontology relations. The crate also carries the scoring harness (embedding
//! similarity, null-distribution percentiles, layer statistics) and the
//! single-prompt baselines.

pub mod baselines;
pub mod dataset;
pub mod engine;
pub mod evaluation;
pub mod gateway;
pub mod graph;
pub mod ontology;

pub use engine::{Engine, EngineError, RunConfig};
pub use graph::{GeneSetRecord, NodeId, ThoughtGraph};
pub use ontology::{Ontology, Relation};
