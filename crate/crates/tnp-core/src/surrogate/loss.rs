//! Likelihood training of the surrogate on within-dataset splits.
//!
//! Each training example is one dataset split into a conditioning part and a
//! held-out part; the objective is the average Gaussian negative
//! log-likelihood of the held-out scores under the decoded predictions. The
//! conditioning part is always a single dataset, so the similarity machinery
//! never enters the training graph.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{adam_step, AdamState, RealArray, Tape, Var};

use super::model::{build_np_graph, encoder_input, x_matrix, NpGraph};
use super::params::NpParams;
use super::{HistorySet, Observation, SurrogateError};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Shuffles a dataset and cuts it at a uniformly drawn point, so both parts
/// are non-empty and every cut position is equally likely.
pub fn split_history(
    history: &HistorySet,
    rng: &mut impl Rng,
) -> Result<(Vec<Observation>, Vec<Observation>), SurrogateError> {
    let n = history.len();
    if n < 2 {
        return Err(SurrogateError::HistoryTooSmall { len: n });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let cut = rng.random_range(1..n);
    let pick = |idx: &[usize]| idx.iter().map(|&i| history.observations()[i].clone()).collect();
    Ok((pick(&indices[..cut]), pick(&indices[cut..])))
}

pub(crate) struct LossGraph {
    pub graph: NpGraph,
    pub nll: Var,
}

/// Extends the shared forward graph with the held-out negative
/// log-likelihood, averaged per held-out observation.
pub(crate) fn build_loss_graph(
    tape: &mut Tape,
    params: &NpParams,
    context: &[Observation],
    held_out: &[Observation],
) -> Result<LossGraph, SurrogateError> {
    if held_out.is_empty() {
        return Err(SurrogateError::InvalidInput(
            "no held-out observations".into(),
        ));
    }
    let d = params.input_dim();
    let pairs = encoder_input(d, context)?;
    let xs = x_matrix(d, context);
    let queries = x_matrix(d, held_out);
    let graph = build_np_graph(tape, params, &pairs, &xs, &queries, None)?;

    let y = tape.leaf(RealArray::column_vector(
        held_out.iter().map(|o| o.y()).collect(),
    ));
    let diff = tape.sub(y, graph.mu);
    let z = tape.div(diff, graph.sigma);
    let z_sq = tape.mul(z, z);
    let half_z_sq = tape.scale(z_sq, 0.5);
    let ln_sigma = tape.ln(graph.sigma);
    let pointwise = tape.add(half_z_sq, ln_sigma);
    let shifted = tape.add_scalar(pointwise, HALF_LN_TWO_PI);
    let nll = tape.mean_all(shifted);
    Ok(LossGraph { graph, nll })
}

/// Held-out negative log-likelihood of one split, forward pass only.
pub fn np_loss(
    params: &NpParams,
    context: &[Observation],
    held_out: &[Observation],
) -> Result<f64, SurrogateError> {
    let mut tape = Tape::new();
    let lg = build_loss_graph(&mut tape, params, context, held_out)?;
    Ok(tape.scalar(lg.nll))
}

/// Held-out negative log-likelihood and its gradient in canonical flat order.
pub fn np_loss_grad(
    params: &NpParams,
    context: &[Observation],
    held_out: &[Observation],
) -> Result<(f64, Vec<f64>), SurrogateError> {
    let mut tape = Tape::new();
    let lg = build_loss_graph(&mut tape, params, context, held_out)?;
    let loss = tape.scalar(lg.nll);
    if !loss.is_finite() {
        return Err(SurrogateError::NonFiniteLoss(loss));
    }
    let grads = tape.backward(lg.nll)?;
    Ok((loss, params.grads_to_flat(&lg.graph.vars, &grads)))
}

/// One optimizer step on a batch of datasets: each dataset is freshly split,
/// the per-dataset losses are averaged, and the parameters are updated in
/// place. Datasets with fewer than two observations are skipped with a
/// warning. Returns the batch loss.
pub fn train_step(
    params: &mut NpParams,
    batch: &[HistorySet],
    opt: &mut AdamState,
    rng: &mut impl Rng,
) -> Result<f64, SurrogateError> {
    let mut tape = Tape::new();
    let mut graphs = Vec::new();
    let mut losses = Vec::new();
    for set in batch {
        if set.len() < 2 {
            warn!(
                "skipping dataset {:?} with {} observation(s); need at least 2 to split",
                set.task_id(),
                set.len()
            );
            continue;
        }
        let (context, held_out) = split_history(set, rng)?;
        let lg = build_loss_graph(&mut tape, params, &context, &held_out)?;
        losses.push(lg.nll);
        graphs.push(lg.graph);
    }
    if losses.is_empty() {
        return Err(SurrogateError::EmptyBatch);
    }
    let stacked = tape.concat_rows(&losses);
    let total = tape.mean_all(stacked);
    let loss = tape.scalar(total);
    if !loss.is_finite() {
        return Err(SurrogateError::NonFiniteLoss(loss));
    }
    let grad_map = tape.backward(total)?;
    let mut grads = vec![0.0; params.num_params()];
    for graph in &graphs {
        for (g, part) in grads
            .iter_mut()
            .zip(params.grads_to_flat(&graph.vars, &grad_map))
        {
            *g += part;
        }
    }
    let mut flat = params.to_flat();
    adam_step(opt, &mut flat, &grads)?;
    params.set_from_flat(&flat)?;
    Ok(loss)
}
