//! Deep (n, k) consensus classification with a reject option, and a
//! consensus-based interpretability method built on input-Jacobian
//! difference vectors.
//!
//! The crate is organised bottom-up:
//!
//! - [`math`]: dense matrices, statistics and a seedable, portable PRNG.
//! - [`nn`]: feed-forward networks, backpropagation, optimizers, training and
//!   penultimate-layer Jacobians.
//! - [`data`]: CSV ingestion, min-max normalization, splits and synthetic /
//!   out-of-distribution generators.
//! - [`consensus`]: the (n, k) consensus rule and coverage/accuracy sweeps.
//! - [`attacks`]: FGSM adversarial batches and transfer evaluation.
//! - [`interpret`]: Jacobian difference vectors, greedy correlation
//!   clustering, cross-model grouping, rejection-gated interpretation,
//!   feature rankings and penultimate-output walks.
//! - [`baselines`] and [`metrics`]: logistic regression / linear SVM and the
//!   binary classification metrics used to compare against them.

pub mod attacks;
pub mod baselines;
pub mod consensus;
pub mod data;
pub mod error;
pub mod interpret;
pub mod math;
pub mod metrics;
pub mod nn;

pub use error::{Error, Result};
