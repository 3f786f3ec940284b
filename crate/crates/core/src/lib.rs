//! Gated fusion of auxiliary text features into token embeddings, with the
//! training and evaluation machinery around it: a hand-differentiated fusion
//! layer (sigmoid gate, norm-capped shift, layer norm, dropout), label
//! smoothing with analytic loss gradients, calibration metrics (ECE/ACE),
//! lexicon and topic feature extraction, point-biserial feature analysis
//! with Benjamini-Hochberg correction, and a small deterministic text
//! classifier that exercises the full pipeline end to end.
//!
//! Everything is f64, seed-deterministic, and validated at the boundaries;
//! gradient paths are checked against central finite differences in tests.

// index loops in the hand-derived numeric kernels mirror the subscripted
// math they implement; iterator rewrites obscure which axis is which
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod calibration;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fusion;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod split;
pub mod stats;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
