//! Dense numeric core with hand-written backward passes.
//!
//! Layers follow one convention: `forward` takes `&self` and returns its
//! output plus whatever cache the backward pass needs; `backward` takes
//! `&mut self`, accumulates into each [`Param::grad`] and returns the
//! gradient with respect to the layer input.

mod activation;
mod adam;
mod conv;
mod gradcheck;
mod linear;
mod loss;
mod lstm;
mod mat;
mod param;
mod real;

pub use activation::Activation;
pub use adam::{adam_step, AdamConfig};
pub use conv::{adaptive_avg_pool, adaptive_avg_pool_backward, Conv2d, Conv2dCache, MapShape};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use linear::Linear;
pub use loss::mse_loss;
pub use lstm::{LstmCellCache, LstmLayer, LstmSeqCache, LstmStack, GATE_ORDER};
pub use mat::{axpy, dot, matmul_backward, Mat};
pub use param::{init_uniform, Param, Parameterized};
pub use real::Real;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {got:?}")]
    ShapeMismatch { op: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("sequence must contain at least one step")]
    EmptySequence,
}
