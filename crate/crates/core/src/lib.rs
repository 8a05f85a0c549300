//! Collaborative filtering on top of pre-computed language embeddings.
//!
//! Item title embeddings are mapped into a recommendation space by a linear
//! probe or a two-layer MLP, then smoothed by LightGCN-style propagation over
//! the user-item training graph. Training uses sampled InfoNCE; evaluation
//! ranks the full item corpus per user.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod intent;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{Matrix, Scalar};
