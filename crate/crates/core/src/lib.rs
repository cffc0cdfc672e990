//! Once-reinforced random walks on rarely splitting trees.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the estimators and the command line use.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod branching;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod output;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod stats;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tree::{NodeStore, TreeModel, VertexId};

/// Walk with `f64` weights on the default random stream.
pub type Walk = walk::WalkState<f64>;
pub type Moments = analytic::MomentSequence<f64>;
pub type Resistance = analytic::Resistance<f64>;
pub type N0Search = analytic::N0Search<f64>;
