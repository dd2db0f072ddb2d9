//! Attention-based neural-process surrogate over black-box evaluation
//! histories.
//!
//! A surrogate instance is a set encoder, a key network, several attention
//! heads, and a Gaussian decoder ([`params`]); it consumes evaluation
//! histories ([`history`]), optionally borrows strength from related
//! histories through similarity-weighted attention ([`model`]), and is
//! trained by held-out log-likelihood on dataset splits ([`loss`]).

mod history;
mod loss;
mod model;
mod params;

pub use history::{
    histories_from_csv, histories_to_csv, standardize, HistorySet, Observation, ScoreStats,
};
pub use loss::{np_loss, np_loss_grad, split_history, train_step};
pub use model::{
    attend, dataset_similarity, decode, encode, predict, AttendOutput, GaussianPrediction,
    SimilarityVector, STD_FLOOR,
};
pub use params::{AttentionScale, HeadParams, NpConfig, NpParams, NpParamsDoc, NpVars};

pub(crate) use model::{build_np_graph, encoder_input, query_matrix, x_matrix};

use crate::nn::NnError;
use thiserror::Error;

/// Errors raised by surrogate construction, training, and inference.
#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("history is empty")]
    EmptyHistory,
    #[error("history has {len} observation(s); at least 2 are required")]
    HistoryTooSmall { len: usize },
    #[error("no trainable dataset in batch")]
    EmptyBatch,
    #[error("training loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
