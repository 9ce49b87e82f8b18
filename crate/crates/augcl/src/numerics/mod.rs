//! Dense-tensor arithmetic with reverse-mode automatic differentiation.
//!
//! All values are 64-bit floats in row-major storage. The [`ComputationGraph`]
//! records operations eagerly into a tape; [`ComputationGraph::backward_grad`]
//! replays it in reverse to produce parameter gradients. First-order optimizers
//! and a flat binary checkpoint format round out the substrate used by the
//! encoder, the losses, and the uncertainty estimator.

mod autodiff;
mod checkpoint;
pub mod gradcheck;
mod optim;
mod tensor;

pub use autodiff::{ComputationGraph, NodeId};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction, graph evaluation, and optimization.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        detail: String,
    },
    #[error("tensor data length {got} does not match shape product {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("log of non-positive value {value} at node {node}")]
    LogDomain { node: usize, value: f64 },
    #[error("loss node {node} is not a scalar (shape {shape:?})")]
    NonScalarLoss { node: usize, shape: Vec<usize> },
    #[error("unknown input `{0}`")]
    UnknownInput(String),
    #[error("input `{name}` has shape {got:?}, expected {expected:?}")]
    InputShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("duplicate leaf name `{0}`")]
    DuplicateName(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("gradient shape {got:?} does not match parameter `{name}` shape {expected:?}")]
    GradientShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;
