//! Block-coordinate Frank-Wolfe for structured SVMs.
//!
//! The dual of the n-slack structural SVM is a product of simplices, one per
//! training example. The solvers here work block by block on that product,
//! calling a loss-augmented max oracle per step, and can sample blocks by
//! their (stale) duality gaps, take pairwise or away steps, and reuse cached
//! corners instead of calling the oracle. [`regpath`] follows approximate
//! solutions along a decreasing regularization parameter.

// `!(a <= b)` is used on purpose so that NaN takes the failing branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boxfw;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod models;
pub mod objective;
pub mod regpath;
pub mod solvers;
pub mod state;

pub use error::{Error, Result};
