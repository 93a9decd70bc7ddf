//! Learning tile-level chunk models from platformer corpora, generating new
//! chunks from them, blending models across level types and scoring levels.

pub mod blending;
pub mod clustering;
pub mod corpus;
pub mod evaluation;
pub mod format;
pub mod generation;
pub mod model;
pub mod pipeline;
pub mod rng;
