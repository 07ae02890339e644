//! State-of-health estimation for battery discharge cycles with a
//! time-informed inverted transformer.
//!
//! The crate is layered bottom-up:
//!
//! - [`numerics`]: `f64` tensors with tape-based reverse-mode AD and a
//!   finite-difference oracle.
//! - [`data`]: cycle files, SoH labels, normalization, padding and masks,
//!   history windows, splits, and a synthetic degradation generator.
//! - [`model`]: the forward pass (temporal attention, variate/time/history
//!   embeddings, encoder, projection head) and checkpoints.
//! - [`training`]: MSE loss, Adam, and the mini-batch loop.
//! - [`evaluation`]: RMSE metrics, reports, ablation runner, plot data.
//! - [`cli`]: the `tidsit` command line.

// NaN must fail validity checks, so they are written as `!(x > bound)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod evaluation;
pub mod fsutil;
pub mod model;
pub mod numerics;
pub mod training;

mod error;

pub use error::{Error, ErrorCategory, Result};
