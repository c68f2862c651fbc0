//! Marketing-copy scoring, reranking, and evaluation.
//!
//! The crate is organized around a single flow: candidate copy texts are
//! embedded and featurized ([`text_features`]), filtered and retrieved
//! against a product catalog ([`vector_index`]), reranked by a weighted
//! diversity/conversion reward ([`optimizer`]), gated by review rules
//! ([`pipeline`]), and evaluated either on real event logs ([`metrics`])
//! or against a seeded synthetic-user model ([`simulator`]).
//!
//! Everything is deterministic: same inputs and seeds, byte-identical
//! outputs. No wall-clock seeding anywhere.

pub mod config;
pub mod hash;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod text_features;
pub mod vector_index;

pub use config::{load_config, Config};
pub use optimizer::{CopyCandidate, LogisticModel, TrainHyper};
pub use text_features::{EmbeddingVector, FeatureConfig, FeatureVector};
pub use vector_index::{Category, ProductRecord, VectorIndex};
