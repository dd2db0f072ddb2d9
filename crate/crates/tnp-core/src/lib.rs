//! Core engine for black-box optimization with a neural surrogate that
//! transfers knowledge from previously optimized tasks.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense arrays, a reverse-mode differentiation tape, MLPs, Adam,
//!   finite-difference gradient checking, and seeded RNG streams.
//! - [`surrogate`]: the neural-process surrogate — observation encoder,
//!   dataset-aware multi-head attention, Gaussian decoder, the split-based
//!   training loss, and batched training steps.
//! - [`meta`]: first-order meta-training across historical tasks, learned
//!   initial configurations, and per-task fine-tuning.
//! - [`smbo`]: the sequential model-based optimization loop — expected
//!   improvement, candidate generation, a Gaussian-process baseline surrogate,
//!   and the trial engine.
//! - [`tasks`]: black-box task families (sampled GP functions, shifted
//!   closed-form landscapes, tabular lookups) and history precomputation.
//! - [`bench`]: experiment orchestration, ranking/distance metrics, and CSV
//!   reports.
//!
//! Everything is deterministic given the experiment seed; parallelism only
//! distributes independent runs and never changes results.

pub mod bench;
mod linalg;

pub mod meta;
pub mod nn;
pub mod smbo;
pub mod surrogate;
pub mod tasks;
