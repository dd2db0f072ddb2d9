//! Neural-network substrate: dense arrays, a reverse-mode tape, MLPs, Adam,
//! and gradient checking. Everything is `f64` and deterministic given a seed.

mod adam;
mod array;
mod gradcheck;
mod mlp;
mod rng;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use array::RealArray;
pub use gradcheck::{finite_diff_check, FdCheckReport};
pub use mlp::{mlp_eval, mlp_forward, Layer, LayerDoc, Mlp, MlpDoc, MlpVars};
pub use rng::{rng_from, seed_stream};
pub use tape::{GradientMap, Tape, Var};

pub(crate) use rng::splitmix64;

use thiserror::Error;

/// Errors from the network substrate.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("backward requires a scalar loss node, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite gradient at parameter index {index}")]
    NonFiniteGradient { index: usize },
    #[error("parameter/gradient length mismatch: {params} vs {grads}")]
    LengthMismatch { params: usize, grads: usize },
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
}
