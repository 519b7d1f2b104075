//! Operator learning with multiple input functions.
//!
//! The crate contains everything needed to compare three architectures for
//! learning a PDE solution operator `G(u)(v)(y)` that takes two input
//! functions:
//!
//! - [`model`]: a concatenated-input fully-connected network, a DeepONet whose
//!   single branch sees both functions concatenated, and the enhanced
//!   DeepONet with one branch per function fused by element-wise product;
//! - [`layer`], [`optim`], [`tensor`]: the dense-network substrate;
//! - [`sampler`], [`pde`]: random input functions and finite-difference
//!   ground truth;
//! - [`dataset`]: the generation pipeline and binary file format;
//! - [`train`]: training, evaluation and the three-way comparison.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod layer;
pub mod model;
pub mod optim;
pub mod pde;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
