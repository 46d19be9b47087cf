//! Cross-lingual neural belief tracking.
//!
//! A convolutional belief tracker trained on a source language, and two ways
//! of transferring it to a target language without target-side dialog
//! annotation: distillation over a parallel corpus, or over source dialogs
//! with dictionary word replacement.

pub mod baselines;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod numeric;
pub mod synth;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};

