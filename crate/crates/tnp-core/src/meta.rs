//! First-order transfer of surrogate parameters and starting configurations
//! across completed tasks.
//!
//! Rather than training one surrogate per task from scratch, a shared
//! initialization is interpolated toward task-adapted parameters, one task at
//! a time: adapt a copy by a few plain gradient steps on that task's history,
//! then move the shared point a small fraction of the way toward the adapted
//! copy. The same scheme learns a handful of starting configurations by
//! ascending a soft maximum of the predicted scores with respect to the
//! inputs themselves, under the task-adapted parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{rng_from, Tape};
use crate::surrogate::{
    build_np_graph, encoder_input, np_loss_grad, query_matrix, split_history, standardize,
    x_matrix, HistorySet, NpParams, NpParamsDoc, SurrogateError,
};

fn default_config_rate() -> f64 {
    0.05
}

fn default_softmax_temp() -> f64 {
    5.0
}

/// Shared surrogate initialization, learned starting configurations, and the
/// rates that govern their adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaState {
    /// Shared surrogate parameters, interpolated across tasks.
    pub theta: NpParams,
    /// Starting configurations in `[0, 1]^d`, proposed before any model-based
    /// trial on a new task.
    pub init_configs: Vec<Vec<f64>>,
    /// Outer interpolation rate toward task-adapted parameters.
    pub epsilon: f64,
    /// Inner plain-gradient step size on surrogate parameters.
    pub alpha_inner: f64,
    /// Number of inner gradient steps per task.
    pub inner_steps: usize,
    /// Ascent step size on starting configurations.
    pub config_rate: f64,
    /// Sharpness of the soft maximum over predicted scores.
    pub softmax_temp: f64,
}

impl MetaState {
    /// Wraps `theta` with `n_init` uniformly drawn starting configurations
    /// and default rates.
    pub fn new(theta: NpParams, n_init: usize, seed: u64) -> Self {
        let d = theta.input_dim();
        let mut rng = rng_from(seed, "init-configs");
        let init_configs = (0..n_init)
            .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        Self {
            theta,
            init_configs,
            epsilon: 0.01,
            alpha_inner: 1e-5,
            inner_steps: 10,
            config_rate: default_config_rate(),
            softmax_temp: default_softmax_temp(),
        }
    }

    /// Like [`MetaState::new`], but starting configurations begin at the best
    /// observed configurations of the histories, so the ascent refines proven
    /// incumbents instead of wandering from arbitrary corners of the cube.
    /// The top-scoring incumbent goes first; the rest are picked greedily by
    /// largest distance to those already chosen, keeping the starting set
    /// spread out. Histories without observations are skipped; uniform draws
    /// fill any remainder.
    pub fn warm_started(
        theta: NpParams,
        n_init: usize,
        histories: &[HistorySet],
        seed: u64,
    ) -> Self {
        let mut state = Self::new(theta, n_init, seed);
        let mut pool: Vec<(Vec<f64>, f64)> = histories
            .iter()
            .filter_map(|h| h.best().map(|(x, y)| (x.to_vec(), y)))
            .collect();
        if pool.is_empty() {
            return state;
        }
        let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(n_init);
        let first = pool
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.1.partial_cmp(&b.1).expect("finite scores"))
            .map(|(i, _)| i)
            .expect("non-empty pool");
        chosen.push(pool.swap_remove(first).0);
        while chosen.len() < n_init && !pool.is_empty() {
            let dist = |x: &[f64]| {
                chosen
                    .iter()
                    .map(|c| {
                        c.iter()
                            .zip(x)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            let next = pool
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| {
                    dist(&a.0).partial_cmp(&dist(&b.0)).expect("finite points")
                })
                .map(|(i, _)| i)
                .expect("non-empty pool");
            chosen.push(pool.swap_remove(next).0);
        }
        for (config, incumbent) in state.init_configs.iter_mut().zip(&chosen) {
            *config = incumbent.clone();
        }
        state
    }

    /// Task-adapts a copy of the shared parameters on one history. Histories
    /// too small to split are left as-is with a warning, so early trials on a
    /// fresh task degrade gracefully.
    pub fn fine_tune(
        &self,
        history: &HistorySet,
        rng: &mut impl Rng,
    ) -> Result<NpParams, SurrogateError> {
        if history.len() < 2 {
            warn!(
                "history {:?} has {} observation(s); using shared parameters without adaptation",
                history.task_id(),
                history.len()
            );
            return Ok(self.theta.clone());
        }
        inner_adapt(&self.theta, history, self.inner_steps, self.alpha_inner, rng)
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        let file = File::create(path).map_err(|e| SurrogateError::Io(e.to_string()))?;
        serde_json::to_writer(BufWriter::new(file), &MetaStateDoc::from(self))
            .map_err(|e| SurrogateError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        let file = File::open(path).map_err(|e| SurrogateError::Io(e.to_string()))?;
        let doc: MetaStateDoc = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| SurrogateError::Io(e.to_string()))?;
        Self::try_from(doc)
    }
}

/// Portable JSON image of a [`MetaState`]. The ascent rate and soft-maximum
/// sharpness default when absent, so older checkpoints stay readable.
#[derive(Debug, Serialize, Deserialize)]
pub struct MetaStateDoc {
    pub theta: NpParamsDoc,
    pub init_configs: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub alpha_inner: f64,
    #[serde(rename = "k")]
    pub inner_steps: usize,
    #[serde(default = "default_config_rate")]
    pub config_rate: f64,
    #[serde(default = "default_softmax_temp")]
    pub softmax_temp: f64,
}

impl From<&MetaState> for MetaStateDoc {
    fn from(state: &MetaState) -> Self {
        MetaStateDoc {
            theta: NpParamsDoc::from(&state.theta),
            init_configs: state.init_configs.clone(),
            epsilon: state.epsilon,
            alpha_inner: state.alpha_inner,
            inner_steps: state.inner_steps,
            config_rate: state.config_rate,
            softmax_temp: state.softmax_temp,
        }
    }
}

impl TryFrom<MetaStateDoc> for MetaState {
    type Error = SurrogateError;

    fn try_from(doc: MetaStateDoc) -> Result<Self, SurrogateError> {
        let theta = NpParams::try_from(doc.theta)?;
        let bad = SurrogateError::InvalidConfig;
        if !(doc.epsilon > 0.0 && doc.epsilon <= 1.0) {
            return Err(bad(format!("interpolation rate {} out of (0, 1]", doc.epsilon)));
        }
        if !(doc.alpha_inner > 0.0 && doc.alpha_inner.is_finite()) {
            return Err(bad(format!("inner step size {} must be positive", doc.alpha_inner)));
        }
        if doc.inner_steps == 0 {
            return Err(bad("at least one inner step is required".into()));
        }
        if !(doc.config_rate > 0.0 && doc.config_rate.is_finite()) {
            return Err(bad(format!("ascent rate {} must be positive", doc.config_rate)));
        }
        if !(doc.softmax_temp >= 0.0 && doc.softmax_temp.is_finite()) {
            return Err(bad(format!(
                "soft-maximum sharpness {} must be non-negative",
                doc.softmax_temp
            )));
        }
        for (i, c) in doc.init_configs.iter().enumerate() {
            if c.len() != theta.input_dim() {
                return Err(SurrogateError::DimensionMismatch {
                    expected: theta.input_dim(),
                    got: c.len(),
                });
            }
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(bad(format!("starting configuration {i} leaves [0, 1]")));
            }
        }
        Ok(MetaState {
            theta,
            init_configs: doc.init_configs,
            epsilon: doc.epsilon,
            alpha_inner: doc.alpha_inner,
            inner_steps: doc.inner_steps,
            config_rate: doc.config_rate,
            softmax_temp: doc.softmax_temp,
        })
    }
}

/// Plain-gradient adaptation: `steps` descent steps of size `alpha` on the
/// split likelihood loss of one history, each step on a fresh split.
pub fn inner_adapt(
    theta: &NpParams,
    history: &HistorySet,
    steps: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<NpParams, SurrogateError> {
    let mut adapted = theta.clone();
    let mut flat = adapted.to_flat();
    for _ in 0..steps {
        let (context, held_out) = split_history(history, rng)?;
        let (_, grad) = np_loss_grad(&adapted, &context, &held_out)?;
        for (p, g) in flat.iter_mut().zip(&grad) {
            *p -= alpha * g;
        }
        adapted.set_from_flat(&flat)?;
    }
    Ok(adapted)
}

/// Moves `shared` a fraction `epsilon` of the way toward `adapted`.
pub fn reptile_update(
    shared: &mut NpParams,
    adapted: &NpParams,
    epsilon: f64,
) -> Result<(), SurrogateError> {
    let mut flat = shared.to_flat();
    let target = adapted.to_flat();
    if flat.len() != target.len() {
        return Err(SurrogateError::InvalidInput(
            "adapted parameters have a different shape".into(),
        ));
    }
    for (p, t) in flat.iter_mut().zip(&target) {
        *p += epsilon * (*t - *p);
    }
    shared.set_from_flat(&flat)
}

/// Soft maximum of the predicted means at `configs` given `history`:
/// the softmax-weighted (sharpness `temp`) average of the means.
pub fn init_config_objective(
    params: &NpParams,
    history: &HistorySet,
    configs: &[Vec<f64>],
    temp: f64,
) -> Result<f64, SurrogateError> {
    let (value, _) = init_config_grad(params, history, configs, temp)?;
    Ok(value)
}

/// The soft-maximum objective and its gradient with respect to each
/// configuration's coordinates.
pub fn init_config_grad(
    params: &NpParams,
    history: &HistorySet,
    configs: &[Vec<f64>],
    temp: f64,
) -> Result<(f64, Vec<Vec<f64>>), SurrogateError> {
    if history.is_empty() {
        return Err(SurrogateError::EmptyHistory);
    }
    let d = params.input_dim();
    let pairs = encoder_input(d, history.observations())?;
    let xs = x_matrix(d, history.observations());
    let queries = query_matrix(d, configs)?;

    let mut tape = Tape::new();
    let graph = build_np_graph(&mut tape, params, &pairs, &xs, &queries, None)?;
    let mu_row = tape.transpose(graph.mu);
    let sharpened = tape.scale(mu_row, temp);
    let weights = tape.softmax_rows(sharpened);
    let weighted = tape.mul(weights, mu_row);
    let objective = tape.sum_all(weighted);

    let value = tape.scalar(objective);
    if !value.is_finite() {
        return Err(SurrogateError::NonFiniteLoss(value));
    }
    let grads = tape.backward(objective)?;
    let q_grad = grads.get(graph.queries);
    let grad = (0..configs.len())
        .map(|i| (0..d).map(|j| q_grad.get(i, j)).collect())
        .collect();
    Ok((value, grad))
}

/// Gradient-ascends the configurations on the soft-maximum objective,
/// clamping to `[0, 1]` after every step.
pub fn ascend_init_configs(
    params: &NpParams,
    history: &HistorySet,
    configs: &[Vec<f64>],
    steps: usize,
    rate: f64,
    temp: f64,
) -> Result<Vec<Vec<f64>>, SurrogateError> {
    let mut current: Vec<Vec<f64>> = configs.to_vec();
    for _ in 0..steps {
        let (_, grad) = init_config_grad(params, history, &current, temp)?;
        for (c, g) in current.iter_mut().zip(&grad) {
            for (x, dx) in c.iter_mut().zip(g) {
                *x = (*x + rate * dx).clamp(0.0, 1.0);
            }
        }
    }
    Ok(current)
}

/// One pass of interpolated adaptation over `tasks` in shuffled order.
/// Returns the final inner loss observed on each visited task.
pub fn meta_train_epoch(
    state: &mut MetaState,
    tasks: &[HistorySet],
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SurrogateError> {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(rng);
    let mut losses = Vec::new();
    for &idx in &order {
        if tasks[idx].len() < 2 {
            warn!(
                "skipping task {:?} with {} observation(s) during meta-training",
                tasks[idx].task_id(),
                tasks[idx].len()
            );
            continue;
        }
        // Each task is standardized on its own score scale, exactly as the
        // optimization loop standardizes a running history before the
        // surrogate sees it.
        let (task, _) = standardize(&tasks[idx]);
        let task = &task;
        let adapted = inner_adapt(
            &state.theta,
            task,
            state.inner_steps,
            state.alpha_inner,
            rng,
        )?;
        let adapted_configs = ascend_init_configs(
            &adapted,
            task,
            &state.init_configs,
            state.inner_steps,
            state.config_rate,
            state.softmax_temp,
        )?;
        reptile_update(&mut state.theta, &adapted, state.epsilon)?;
        for (shared, target) in state.init_configs.iter_mut().zip(&adapted_configs) {
            for (x, t) in shared.iter_mut().zip(target) {
                *x += state.epsilon * (t - *x);
            }
        }
        let (context, held_out) = split_history(task, rng)?;
        let (loss, _) = np_loss_grad(&adapted, &context, &held_out)?;
        losses.push(loss);
    }
    if losses.is_empty() {
        return Err(SurrogateError::EmptyBatch);
    }
    Ok(losses)
}

/// Runs `epochs` passes of [`meta_train_epoch`] and returns each epoch's
/// mean final inner loss.
pub fn meta_train(
    state: &mut MetaState,
    tasks: &[HistorySet],
    epochs: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SurrogateError> {
    let mut curve = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let losses = meta_train_epoch(state, tasks, rng)?;
        curve.push(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff_check;
    use crate::surrogate::{np_loss, predict, NpConfig, Observation};

    fn tiny_params(seed: u64) -> NpParams {
        let cfg = NpConfig {
            input_dim: 2,
            embed_dim: 4,
            num_heads: 2,
            hidden: vec![4],
            attention_scale: Default::default(),
        };
        NpParams::init(&cfg, seed).unwrap()
    }

    fn history(n: usize, seed: u64) -> HistorySet {
        let mut rng = rng_from(seed, "meta-test");
        let mut set = HistorySet::new("t");
        for _ in 0..n {
            let x = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            set.push(Observation::new(x, rng.random_range(-1.0..1.0)).unwrap())
                .unwrap();
        }
        set
    }

    #[test]
    fn single_inner_step_is_exactly_one_gradient_step() {
        let theta = tiny_params(1);
        let set = history(5, 2);
        let alpha = 1e-3;

        let mut rng_a = rng_from(7, "inner");
        let adapted = inner_adapt(&theta, &set, 1, alpha, &mut rng_a).unwrap();

        let mut rng_b = rng_from(7, "inner");
        let (context, held_out) = split_history(&set, &mut rng_b).unwrap();
        let (_, grad) = np_loss_grad(&theta, &context, &held_out).unwrap();
        let expected: Vec<f64> = theta
            .to_flat()
            .iter()
            .zip(&grad)
            .map(|(p, g)| p - alpha * g)
            .collect();
        assert_eq!(adapted.to_flat(), expected);
    }

    #[test]
    fn interpolation_moves_the_exact_fraction() {
        let mut shared = tiny_params(3);
        let adapted = tiny_params(4);
        let before = shared.to_flat();
        let target = adapted.to_flat();
        reptile_update(&mut shared, &adapted, 0.25).unwrap();
        for ((s, b), t) in shared.to_flat().iter().zip(&before).zip(&target) {
            assert!((s - (b + 0.25 * (t - b))).abs() < 1e-15);
        }

        let mut frozen = tiny_params(5);
        let before = frozen.to_flat();
        reptile_update(&mut frozen, &adapted, 0.0).unwrap();
        assert_eq!(frozen.to_flat(), before);
    }

    #[test]
    fn warm_started_configs_take_the_best_incumbent_then_spread_out() {
        let sets: Vec<HistorySet> = (0..4).map(|i| history(5, 30 + i)).collect();
        let bests: Vec<(Vec<f64>, f64)> = sets
            .iter()
            .map(|h| h.best().map(|(x, y)| (x.to_vec(), y)).unwrap())
            .collect();
        let top = bests
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
            .clone();

        let state = MetaState::warm_started(tiny_params(6), 2, &sets, 0);
        assert_eq!(state.init_configs[0], top);
        let second = &state.init_configs[1];
        assert!(bests.iter().any(|(x, _)| x == second));
        let d2 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
        };
        for (x, _) in &bests {
            assert!(d2(&top, second) >= d2(&top, x) - 1e-12 || x == second || *x == top);
        }

        let fallback = MetaState::warm_started(tiny_params(6), 3, &[], 0);
        assert_eq!(fallback.init_configs, MetaState::new(tiny_params(6), 3, 0).init_configs);

        // More initials than histories: the tail keeps its uniform draws.
        let padded = MetaState::warm_started(tiny_params(6), 6, &sets, 0);
        let uniform = MetaState::new(tiny_params(6), 6, 0);
        assert_eq!(padded.init_configs[4..], uniform.init_configs[4..]);
    }

    #[test]
    fn fine_tune_returns_shared_parameters_for_tiny_history() {
        let state = MetaState::new(tiny_params(6), 3, 0);
        let set = history(1, 7);
        let mut rng = rng_from(0, "ft");
        let tuned = state.fine_tune(&set, &mut rng).unwrap();
        assert_eq!(tuned.to_flat(), state.theta.to_flat());
    }

    #[test]
    fn fine_tuning_reduces_loss_on_the_task() {
        let mut state = MetaState::new(tiny_params(8), 3, 1);
        state.alpha_inner = 1e-2;
        state.inner_steps = 25;
        let set = history(8, 9);

        let mut eval_rng = rng_from(40, "eval");
        let (context, held_out) = split_history(&set, &mut eval_rng).unwrap();
        let before = np_loss(&state.theta, &context, &held_out).unwrap();

        let mut rng = rng_from(41, "ft");
        let tuned = state.fine_tune(&set, &mut rng).unwrap();
        let after = np_loss(&tuned, &context, &held_out).unwrap();
        assert!(after < before, "loss went {before} -> {after}");
    }

    #[test]
    fn soft_maximum_matches_prediction_arithmetic() {
        let params = tiny_params(10);
        let set = history(5, 11);
        let configs = vec![vec![0.2, 0.3], vec![0.8, 0.5], vec![0.5, 0.9]];
        let temp = 5.0;

        let value = init_config_objective(&params, &set, &configs, temp).unwrap();

        let preds = predict(&params, &set, &[], &configs).unwrap();
        let logits: Vec<f64> = preds.iter().map(|p| temp * p.mean).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let expected: f64 = preds
            .iter()
            .zip(&exps)
            .map(|(p, e)| e / total * p.mean)
            .sum();
        assert!((value - expected).abs() < 1e-12, "{value} vs {expected}");
    }

    #[test]
    fn config_gradient_matches_finite_differences() {
        let params = tiny_params(12);
        let set = history(5, 13);
        let configs = vec![vec![0.25, 0.4], vec![0.7, 0.6]];
        let temp = 5.0;

        let (_, grad) = init_config_grad(&params, &set, &configs, temp).unwrap();
        let analytic: Vec<f64> = grad.into_iter().flatten().collect();
        let flat: Vec<f64> = configs.iter().flatten().copied().collect();
        let report = finite_diff_check(
            |xs| {
                let probe: Vec<Vec<f64>> = xs.chunks(2).map(|c| c.to_vec()).collect();
                init_config_objective(&params, &set, &probe, temp).unwrap()
            },
            &analytic,
            &flat,
            1e-6,
            1e-4,
        );
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn ascent_raises_the_objective_and_respects_bounds() {
        let params = tiny_params(14);
        let set = history(6, 15);
        let configs = vec![vec![0.4, 0.4], vec![0.6, 0.6]];
        let temp = 5.0;

        let before = init_config_objective(&params, &set, &configs, temp).unwrap();
        let moved = ascend_init_configs(&params, &set, &configs, 20, 0.05, temp).unwrap();
        let after = init_config_objective(&params, &set, &moved, temp).unwrap();
        assert!(after >= before, "objective went {before} -> {after}");
        assert!(moved != configs, "ascent never moved the configurations");

        let slammed = ascend_init_configs(&params, &set, &configs, 5, 50.0, temp).unwrap();
        for c in &slammed {
            for &x in c {
                assert!((0.0..=1.0).contains(&x), "coordinate {x} escaped");
            }
        }
    }

    #[test]
    fn meta_training_is_deterministic_and_moves_the_shared_point() {
        let tasks = vec![history(6, 16), history(7, 17), history(5, 18)];
        let run = |seed: u64| {
            let mut state = MetaState::new(tiny_params(19), 2, 20);
            state.epsilon = 0.5;
            state.alpha_inner = 1e-2;
            state.inner_steps = 3;
            let mut rng = rng_from(seed, "meta");
            let curve = meta_train(&mut state, &tasks, 3, &mut rng).unwrap();
            (state, curve)
        };
        let (state_a, curve_a) = run(33);
        let (state_b, curve_b) = run(33);
        assert_eq!(state_a.theta.to_flat(), state_b.theta.to_flat());
        assert_eq!(state_a.init_configs, state_b.init_configs);
        assert_eq!(curve_a, curve_b);

        let fresh = MetaState::new(tiny_params(19), 2, 20);
        assert!(state_a.theta.to_flat() != fresh.theta.to_flat());
        assert!(curve_a.iter().all(|l| l.is_finite()));

        let (state_c, _) = run(34);
        assert!(state_a.theta.to_flat() != state_c.theta.to_flat());
    }

    #[test]
    fn checkpoint_round_trip_and_defaults() {
        let mut state = MetaState::new(tiny_params(21), 3, 22);
        state.epsilon = 0.07;
        state.config_rate = 0.11;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        state.save(&path).unwrap();
        let back = MetaState::load(&path).unwrap();
        assert_eq!(state, back);

        // older images without the newer rate fields still load, with defaults
        let mut value: serde_json::Value =
            serde_json::from_reader(File::open(&path).unwrap()).unwrap();
        let obj = value.as_object_mut().unwrap();
        assert!(obj.contains_key("k"), "inner step count must appear as 'k'");
        obj.remove("config_rate");
        obj.remove("softmax_temp");
        let stripped: MetaState =
            MetaState::try_from(serde_json::from_value::<MetaStateDoc>(value).unwrap()).unwrap();
        assert_eq!(stripped.config_rate, default_config_rate());
        assert_eq!(stripped.softmax_temp, default_softmax_temp());
    }

    #[test]
    fn invalid_checkpoints_are_rejected() {
        let state = MetaState::new(tiny_params(23), 2, 24);
        let mut doc = MetaStateDoc::from(&state);
        doc.epsilon = 0.0;
        assert!(MetaState::try_from(doc).is_err());

        let mut doc = MetaStateDoc::from(&state);
        doc.init_configs[0][1] = 1.5;
        assert!(MetaState::try_from(doc).is_err());

        let mut doc = MetaStateDoc::from(&state);
        doc.init_configs[0] = vec![0.5];
        assert!(matches!(
            MetaState::try_from(doc),
            Err(SurrogateError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}
