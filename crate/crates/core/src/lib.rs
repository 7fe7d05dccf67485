//! Language-similarity toolkit for cross-lingual speech transfer.
//!
//! The crate is organised as a pipeline:
//!
//! ```text
//! corpus (manifests, WAV, tables) -> features (log-Mel, SpecAugment)
//!   -> model (speech/text encoders, losses, training)
//!   -> embeddings (per-language means, k-means)
//!   -> distances (cosine, genetic, geographic, ensemble, ranking)
//!   -> evaluation (Spearman, family classification, CER, reports)
//! ```

pub mod corpus;
pub mod distances;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod synthetic;

pub use error::{Error, Result};
