//! Sequential model-based optimization of black-box scores.
//!
//! A run evaluates a batch of initial configurations, then alternates
//! surrogate fitting, expected-improvement maximization over a candidate
//! pool, and evaluation of the chosen configuration. Surrogates are
//! pluggable: seeded random choice, a Gaussian-process baseline, a neural
//! surrogate fine-tuned on the current history alone, or the meta-trained
//! transfer surrogate with learned starting configurations and
//! similarity-weighted attention over historical datasets.

mod acquisition;
mod candidates;
mod gp;

pub use acquisition::{expected_improvement, normal_cdf, normal_pdf, propose_next};
pub use candidates::{sobol_candidates, MAX_DIM};
pub use gp::{gp_surrogate_predict, GP_NOISE, LENGTH_SCALE_GRID};

use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meta::{inner_adapt, MetaState};
use crate::nn::rng_from;
use crate::surrogate::{
    predict, standardize, HistorySet, NpParams, Observation, SurrogateError,
};
use crate::tasks::{BlackBoxTask, TaskError};

/// Failure modes of the optimization loop and its surrogates.
#[derive(Debug, Error)]
pub enum SmboError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate dimension {dim} is outside the supported range 1..=10")]
    UnsupportedDimension { dim: usize },
    #[error("Gaussian-process fit failed: {0}")]
    GpFit(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// How the next configuration is chosen each trial.
#[derive(Debug, Clone)]
pub enum Method {
    /// Uniform seeded choice among the candidates; no surrogate.
    RandomSearch,
    /// Matérn-5/2 Gaussian-process posterior with expected improvement.
    GaussianProcess,
    /// Neural surrogate adapted to the current history only — no learned
    /// initialization and no attention over other datasets.
    Np {
        params: NpParams,
        inner_steps: usize,
        alpha_inner: f64,
    },
    /// Meta-trained transfer surrogate: learned starting configurations,
    /// per-trial fine-tuning from the shared parameters, and
    /// similarity-weighted attention over historical datasets.
    TransferNp { meta: MetaState },
}

impl Method {
    /// Neural surrogate with the default per-trial adaptation schedule.
    pub fn np(params: NpParams) -> Self {
        Self::Np {
            params,
            inner_steps: 10,
            alpha_inner: 1e-5,
        }
    }

    /// Short stable name used in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            Self::RandomSearch => "random",
            Self::GaussianProcess => "gp",
            Self::Np { .. } => "cnp",
            Self::TransferNp { .. } => "tnp",
        }
    }
}

fn default_num_initial() -> usize {
    3
}

fn default_num_candidates() -> usize {
    512
}

/// Budget and seeding of one optimization run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmboConfig {
    /// Model-guided trials after the initial batch. Zero is allowed and
    /// reports the best initial configuration.
    pub trials: usize,
    /// Initial configurations evaluated before any surrogate fit.
    #[serde(default = "default_num_initial")]
    pub num_initial: usize,
    /// Size of the generated candidate pool (ignored when the task carries
    /// its own, e.g. tabular tasks).
    #[serde(default = "default_num_candidates")]
    pub num_candidates: usize,
    /// Run seed; experiment drivers override it per run.
    #[serde(default)]
    pub seed: u64,
}

impl SmboConfig {
    /// A run with the default initial batch (3) and candidate pool (512).
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            num_initial: default_num_initial(),
            num_candidates: default_num_candidates(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SmboError> {
        if self.num_initial == 0 {
            return Err(SmboError::InvalidConfig(
                "at least one initial configuration is required".into(),
            ));
        }
        if self.num_candidates == 0 {
            return Err(SmboError::InvalidConfig(
                "the candidate pool cannot be empty".into(),
            ));
        }
        Ok(())
    }
}

/// One model-guided trial: what was tried, what it scored, and the running
/// best after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// 1-based trial index; the initial batch is not numbered.
    pub trial: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
    pub millis: u64,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SmboOutcome {
    pub records: Vec<TrialRecord>,
    pub best_x: Vec<f64>,
    pub best_y: f64,
    /// All evaluations, initial batch included, in evaluation order.
    pub history: HistorySet,
}

/// Evaluates the task, replacing a non-finite score with one point below the
/// worst score seen so far (logged), so a single bad evaluation cannot sink
/// the run.
fn guarded_evaluate(
    task: &BlackBoxTask,
    x: &[f64],
    history: &HistorySet,
) -> Result<f64, SmboError> {
    let y = task.evaluate(x)?;
    if y.is_finite() {
        return Ok(y);
    }
    let worst = history
        .observations()
        .iter()
        .map(Observation::y)
        .fold(f64::INFINITY, f64::min);
    let penalty = if worst.is_finite() { worst - 1.0 } else { -1.0 };
    warn!(
        "task '{}' returned a non-finite score at {x:?}; recording {penalty}",
        task.task_id()
    );
    Ok(penalty)
}

/// Runs the full loop: initial evaluations, then `config.trials` rounds of
/// fit, propose, evaluate, update. Historical sets only influence the
/// transfer surrogate. Deterministic given (task, method, config).
pub fn run_smbo(
    task: &BlackBoxTask,
    method: &Method,
    historical: &[HistorySet],
    config: &SmboConfig,
) -> Result<SmboOutcome, SmboError> {
    config.validate()?;
    let dim = task.dim();
    let surrogate_dim = match method {
        Method::Np { params, .. } => Some(params.input_dim()),
        Method::TransferNp { meta } => Some(meta.theta.input_dim()),
        _ => None,
    };
    if let Some(got) = surrogate_dim {
        if got != dim {
            return Err(SurrogateError::DimensionMismatch { expected: dim, got }.into());
        }
    }

    // Candidate pool: tabular tasks carry their own rows, everything else
    // draws a seeded digitally-shifted Sobol set.
    let candidates: Vec<Vec<f64>> = match task.candidates() {
        Some(rows) => rows.to_vec(),
        None => sobol_candidates(
            dim,
            config.num_candidates,
            &mut rng_from(config.seed, "candidates"),
        )?,
    };
    if candidates.is_empty() {
        return Err(SmboError::InvalidConfig("empty candidate pool".into()));
    }

    // Initial configurations: the transfer surrogate spends its learned
    // ones first; any remainder (and every other method) draws uniformly
    // from the seeded stream.
    let mut init_rng = rng_from(config.seed, "init");
    let mut initials: Vec<Vec<f64>> = Vec::with_capacity(config.num_initial);
    if let Method::TransferNp { meta } = method {
        initials.extend(
            meta.init_configs
                .iter()
                .take(config.num_initial)
                .cloned(),
        );
    }
    while initials.len() < config.num_initial {
        initials.push((0..dim).map(|_| init_rng.random_range(0.0..=1.0)).collect());
    }

    let mut history = HistorySet::new(task.task_id());
    for x in initials {
        let y = guarded_evaluate(task, &x, &history)?;
        history.push(Observation::new(x, y)?)?;
    }

    // Historical sets are standardized once, each by its own score scale.
    let std_historical: Vec<HistorySet> = if matches!(method, Method::TransferNp { .. }) {
        historical.iter().map(|h| standardize(h).0).collect()
    } else {
        Vec::new()
    };

    let mut random_rng = rng_from(config.seed, "random");
    let mut records = Vec::with_capacity(config.trials);
    for t in 1..=config.trials {
        let started = Instant::now();
        let index = match method {
            Method::RandomSearch => random_rng.random_range(0..candidates.len()),
            Method::GaussianProcess => {
                let predictions = gp_surrogate_predict(&history, &candidates)?;
                let (_, y_best) = history.best().expect("history has the initial batch");
                propose_next(&predictions, y_best)
            }
            Method::Np {
                params,
                inner_steps,
                alpha_inner,
            } => {
                let (std_history, stats) = standardize(&history);
                let adapted = if std_history.len() < 2 {
                    params.clone()
                } else {
                    let mut rng = rng_from(config.seed, &format!("finetune-{t}"));
                    inner_adapt(params, &std_history, *inner_steps, *alpha_inner, &mut rng)?
                };
                let predictions = predict(&adapted, &std_history, &[], &candidates)?;
                let (_, y_best) = history.best().expect("history has the initial batch");
                propose_next(&predictions, stats.forward(y_best))
            }
            Method::TransferNp { meta } => {
                let (std_history, stats) = standardize(&history);
                let mut rng = rng_from(config.seed, &format!("finetune-{t}"));
                let adapted = meta.fine_tune(&std_history, &mut rng)?;
                let predictions = predict(&adapted, &std_history, &std_historical, &candidates)?;
                let (_, y_best) = history.best().expect("history has the initial batch");
                propose_next(&predictions, stats.forward(y_best))
            }
        };
        let x = candidates[index].clone();
        let y = guarded_evaluate(task, &x, &history)?;
        history.push(Observation::new(x.clone(), y)?)?;
        let (_, best_so_far) = history.best().expect("history is non-empty");
        records.push(TrialRecord {
            trial: t,
            x,
            y,
            best_so_far,
            millis: started.elapsed().as_millis() as u64,
        });
    }

    let (best_x, best_y) = history
        .best()
        .expect("at least one initial configuration was evaluated");
    Ok(SmboOutcome {
        records,
        best_x: best_x.to_vec(),
        best_y,
        history,
    })
}

/// Builds one historical observation set by running a base optimizer for
/// `total` evaluations (initial batch included). The smallest useful history
/// has two points.
pub fn precompute_history(
    task: &BlackBoxTask,
    method: &Method,
    total: usize,
    seed: u64,
) -> Result<HistorySet, SmboError> {
    if total < 2 {
        return Err(SmboError::InvalidConfig(format!(
            "a history needs at least 2 evaluations, got {total}"
        )));
    }
    let num_initial = (total - 1).min(3);
    let config = SmboConfig {
        trials: total - num_initial,
        num_initial,
        num_candidates: default_num_candidates(),
        seed,
    };
    Ok(run_smbo(task, method, &[], &config)?.history)
}
