//! Dense `f64` tensors, forward kernels, and tape-based reverse-mode AD.

pub mod gradcheck;
pub mod ops;
mod params;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_gradient, max_relative_error, GradCheckReport};
pub use params::ParamSet;
pub use rng::{streams, RngStream};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {0:?}: dimensions must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not hold {len} elements")]
    ElementCount { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("mask has no valid positions")]
    DegenerateMask,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidDropout(f64),
    #[error("dropout in training mode needs an rng stream")]
    MissingRng,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarSeed(Vec<usize>),
    #[error("concatenation of zero tensors")]
    EmptyConcat,
    #[error("unknown parameter path `{0}`")]
    UnknownParam(String),
    #[error("parameter sets disagree: {0}")]
    ParamMismatch(String),
}
