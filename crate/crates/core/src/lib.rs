//! Evaluation harness for probing how language models understand metaphor.
//!
//! Three experiments share one pipeline: spatial analysis of interpretation
//! embeddings against a conceptual plane, overlap between contextual and
//! context-free word imagination, and metaphor detection on syntactically
//! shuffled sentences. A multiple-choice validation task rounds it out.
//! Chat and embedding providers are pluggable, and fixture providers make
//! every metric reproducible offline.

pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod experiments;
pub mod gateway;
pub mod geometry;
#[cfg(feature = "live")]
pub mod live;
pub mod pipeline;
pub mod provider;
pub mod text;
pub mod transforms;
