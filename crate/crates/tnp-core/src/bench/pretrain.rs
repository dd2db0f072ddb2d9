//! Surrogate pre-training on functions drawn from a smooth prior, and
//! assembly of historical observation sets with a base optimizer.

use rand::Rng;

use super::BenchError;
use crate::meta::{meta_train, MetaState};
use crate::nn::{rng_from, seed_stream, AdamConfig, AdamState};
use crate::smbo::{precompute_history, Method};
use crate::surrogate::{standardize, train_step, HistorySet, NpConfig, NpParams};
use crate::tasks::{sample_gp_observations, TaskFamily};

/// Pre-training schedule: how many batches of freshly sampled functions to
/// fit, and how big each is. Function sizes are drawn uniformly from
/// `[min_points_per_function, points_per_function]` so the surrogate sees
/// both sparse and dense contexts — optimization histories start small.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub arch: NpConfig,
    pub batches: usize,
    pub functions_per_batch: usize,
    pub min_points_per_function: usize,
    pub points_per_function: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl PretrainConfig {
    /// Default schedule: 3000 batches of 4 functions with 4-16 observations
    /// each, Adam at 1e-3.
    pub fn new(arch: NpConfig, seed: u64) -> Self {
        Self {
            arch,
            batches: 3000,
            functions_per_batch: 4,
            min_points_per_function: 4,
            points_per_function: 16,
            learning_rate: 1e-3,
            seed,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.batches == 0 || self.functions_per_batch == 0 {
            return Err(BenchError::InvalidConfig(
                "pre-training needs at least one batch of one function".into(),
            ));
        }
        if self.min_points_per_function < 2
            || self.points_per_function < self.min_points_per_function
        {
            return Err(BenchError::InvalidConfig(format!(
                "function sizes {}..={} must be an ordered range starting at 2 or more",
                self.min_points_per_function, self.points_per_function
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(BenchError::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One standardized observation set drawn from the function prior: the
/// length scale is uniform in [0.3, 1.0], the kernel scale is one, and the
/// observation sites are uniform in the cube.
pub fn sample_prior_history(
    dim: usize,
    points: usize,
    rng: &mut impl Rng,
) -> Result<HistorySet, BenchError> {
    let length_scale = rng.random_range(0.3..=1.0);
    let observations = sample_gp_observations(dim, points, length_scale, 1.0, rng)?;
    let mut history = HistorySet::new("prior-sample");
    for obs in observations {
        history.push(obs)?;
    }
    Ok(standardize(&history).0)
}

/// Fits a fresh surrogate to a stream of prior-sampled function batches and
/// returns it with the per-batch loss curve. Deterministic in the seed.
pub fn pretrain(config: &PretrainConfig) -> Result<(NpParams, Vec<f64>), BenchError> {
    config.validate()?;
    let mut params = NpParams::init(&config.arch, seed_stream(config.seed, "pretrain-init"))?;
    let mut opt = AdamState::new(
        params.num_params(),
        AdamConfig::with_alpha(config.learning_rate),
    );
    let mut rng = rng_from(config.seed, "pretrain");
    let dim = config.arch.input_dim;
    let mut curve = Vec::with_capacity(config.batches);
    for _ in 0..config.batches {
        let batch = (0..config.functions_per_batch)
            .map(|_| {
                let points =
                    rng.random_range(config.min_points_per_function..=config.points_per_function);
                sample_prior_history(dim, points, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        curve.push(train_step(&mut params, &batch, &mut opt, &mut rng)?);
    }
    Ok((params, curve))
}

/// Historical observation sets from consecutive family members, each
/// produced by running the base optimizer for `total` evaluations.
pub fn build_histories(
    family: &TaskFamily,
    first_member: u64,
    count: usize,
    base: &Method,
    total: usize,
    seed: u64,
) -> Result<Vec<HistorySet>, BenchError> {
    (0..count)
        .map(|j| {
            let task = family.member(first_member + j as u64)?;
            Ok(precompute_history(
                &task,
                base,
                total,
                seed_stream(seed, &format!("historical-{j}")),
            )?)
        })
        .collect()
}

/// Meta-trains shared parameters and starting configurations across
/// historical sets; returns the state and the per-epoch mean loss curve.
pub fn metatrain(
    params: NpParams,
    histories: &[HistorySet],
    n_init: usize,
    epochs: usize,
    seed: u64,
) -> Result<(MetaState, Vec<f64>), BenchError> {
    let mut state = MetaState::warm_started(params, n_init, histories, seed);
    let curve = meta_train(
        &mut state,
        histories,
        epochs,
        &mut rng_from(seed, "meta-train"),
    )?;
    Ok((state, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch(dim: usize) -> NpConfig {
        NpConfig {
            input_dim: dim,
            embed_dim: 8,
            num_heads: 2,
            hidden: vec![8],
            attention_scale: Default::default(),
        }
    }

    #[test]
    fn prior_histories_are_standardized_and_reproducible() {
        let mut rng = rng_from(4, "prior");
        let h = sample_prior_history(1, 32, &mut rng).unwrap();
        assert_eq!(h.len(), 32);
        let mean: f64 = h.observations().iter().map(|o| o.y()).sum::<f64>() / 32.0;
        let var: f64 = h
            .observations()
            .iter()
            .map(|o| (o.y() - mean) * (o.y() - mean))
            .sum::<f64>()
            / 32.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-10);
        assert!(h
            .observations()
            .iter()
            .all(|o| o.x().iter().all(|&c| (0.0..=1.0).contains(&c))));
        let again = sample_prior_history(1, 32, &mut rng_from(4, "prior")).unwrap();
        let bits = |h: &HistorySet| -> Vec<u64> {
            h.observations().iter().map(|o| o.y().to_bits()).collect()
        };
        assert_eq!(bits(&h), bits(&again));
    }

    #[test]
    fn short_pretraining_runs_are_deterministic_and_finite() {
        let config = PretrainConfig {
            arch: tiny_arch(1),
            batches: 12,
            functions_per_batch: 2,
            min_points_per_function: 4,
            points_per_function: 8,
            learning_rate: 1e-3,
            seed: 5,
        };
        let (params_a, curve_a) = pretrain(&config).unwrap();
        let (params_b, curve_b) = pretrain(&config).unwrap();
        assert_eq!(curve_a.len(), 12);
        assert!(curve_a.iter().all(|l| l.is_finite()));
        let bits = |p: &NpParams| -> Vec<u64> { p.to_flat().iter().map(|v| v.to_bits()).collect() };
        assert_eq!(bits(&params_a), bits(&params_b));
        assert_eq!(
            curve_a.iter().map(|l| l.to_bits()).collect::<Vec<_>>(),
            curve_b.iter().map(|l| l.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pretraining_reduces_the_fitting_loss() {
        let config = PretrainConfig {
            arch: tiny_arch(1),
            batches: 150,
            functions_per_batch: 4,
            min_points_per_function: 6,
            points_per_function: 12,
            learning_rate: 1e-2,
            seed: 11,
        };
        let (_, curve) = pretrain(&config).unwrap();
        let head: f64 = curve[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = curve[curve.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "loss went from {head} to {tail}");
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let mut config = PretrainConfig::new(tiny_arch(1), 0);
        config.batches = 0;
        assert!(pretrain(&config).is_err());
        let mut config = PretrainConfig::new(tiny_arch(1), 0);
        config.points_per_function = 1;
        assert!(pretrain(&config).is_err(), "range below the minimum");
        let mut config = PretrainConfig::new(tiny_arch(1), 0);
        config.min_points_per_function = 1;
        assert!(pretrain(&config).is_err(), "minimum size below 2");
        let mut config = PretrainConfig::new(tiny_arch(1), 0);
        config.learning_rate = -1.0;
        assert!(pretrain(&config).is_err());
    }

    #[test]
    fn histories_come_from_distinct_members_and_reproduce() {
        let family = TaskFamily::quad_shift(2, 31);
        let histories =
            build_histories(&family, 5, 3, &Method::RandomSearch, 6, 77).unwrap();
        assert_eq!(histories.len(), 3);
        assert!(histories.iter().all(|h| h.len() == 6));
        let ids: Vec<&str> = histories.iter().map(|h| h.task_id()).collect();
        assert!(ids.windows(2).all(|w| w[0] != w[1]));
        let again = build_histories(&family, 5, 3, &Method::RandomSearch, 6, 77).unwrap();
        assert_eq!(histories, again);
    }

    #[test]
    fn meta_training_returns_a_curve_and_keeps_configs_in_the_cube() {
        let family = TaskFamily::quad_shift(1, 13);
        let histories = build_histories(&family, 0, 3, &Method::RandomSearch, 5, 3).unwrap();
        let params = NpParams::init(&tiny_arch(1), 2).unwrap();
        let (state, curve) = metatrain(params, &histories, 3, 2, 9).unwrap();
        assert_eq!(curve.len(), 2);
        assert_eq!(state.init_configs.len(), 3);
        assert!(state
            .init_configs
            .iter()
            .all(|c| c.iter().all(|&v| (0.0..=1.0).contains(&v))));
    }
}
