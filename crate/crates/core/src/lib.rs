//! Scale invariance of vision-transformer patch embeddings.
//!
//! The crate models the early stage of a vision transformer (patch
//! projection, optional PreLayerNorm, positional embedding, PostLayerNorm),
//! measures how much the positional embedding contributes to that stage's
//! output, and benchmarks linear probes on top of it under contrast,
//! brightness and geometric corruptions.

pub mod cli;
pub mod corruptions;
mod dd;
pub mod ecpe;
pub mod embedding;
pub mod error;
pub mod image;
pub mod probe;
pub mod suite;
pub mod svg;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
