//! Forward computation of the surrogate: set encoding, similarity-modulated
//! multi-head attention, and Gaussian decoding.
//!
//! Training and inference share one graph builder so the optimized quantity
//! and the deployed predictor can never drift apart. With no side datasets
//! the similarity machinery drops out entirely and the model reduces to
//! plain cross-attention over the current observations.

use log::warn;

use crate::nn::{mlp_eval, RealArray, Tape, Var};

use super::params::{AttentionScale, NpParams, NpVars};
use super::{HistorySet, Observation, SurrogateError};

/// Additive lower bound on the predicted standard deviation.
pub const STD_FLOOR: f64 = 1e-3;

/// A per-query Gaussian belief over the (standardized) score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub std: f64,
}

/// Softmax weights that rebalance attention between the current dataset and
/// each observation of the side datasets.
///
/// The logit vector is `[1, c_1 repeated T_1 times, ..., c_M repeated T_M
/// times]` where `c_m` is the cosine between mean set embeddings and `T_m`
/// the side dataset's size; the single leading slot covers every current
/// observation at once.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityVector {
    weights: Vec<f64>,
    cosines: Vec<f64>,
    task_sizes: Vec<usize>,
}

impl SimilarityVector {
    /// Builds the softmax weights from per-dataset cosines and sizes.
    pub fn from_cosines(cosines: &[f64], task_sizes: &[usize]) -> Result<Self, SurrogateError> {
        if cosines.len() != task_sizes.len() {
            return Err(SurrogateError::InvalidInput(format!(
                "{} cosines for {} dataset sizes",
                cosines.len(),
                task_sizes.len()
            )));
        }
        let mut logits = Vec::with_capacity(1 + task_sizes.iter().sum::<usize>());
        logits.push(1.0);
        for (&c, &t) in cosines.iter().zip(task_sizes) {
            logits.extend(std::iter::repeat(c).take(t));
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self {
            weights,
            cosines: cosines.to_vec(),
            task_sizes: task_sizes.to_vec(),
        })
    }

    /// Weight of the slot shared by every current observation.
    pub fn in_dataset_weight(&self) -> f64 {
        self.weights[0]
    }

    /// Total weight mass assigned to side dataset `m` (0-based).
    pub fn task_mass(&self, m: usize) -> f64 {
        let start = 1 + self.task_sizes[..m].iter().sum::<usize>();
        self.weights[start..start + self.task_sizes[m]].iter().sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn task_sizes(&self) -> &[usize] {
        &self.task_sizes
    }

    /// Expands to one multiplier per attention column: the leading weight is
    /// broadcast over the `n_current` current observations, the rest are
    /// already per-column.
    pub(crate) fn expand_modulation(&self, n_current: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n_current + self.weights.len() - 1);
        out.extend(std::iter::repeat(self.weights[0]).take(n_current));
        out.extend_from_slice(&self.weights[1..]);
        out
    }
}

/// Cosine between mean set embeddings of the current dataset and each side
/// dataset, turned into attention modulation weights.
pub fn dataset_similarity(
    params: &NpParams,
    current: &HistorySet,
    historical: &[HistorySet],
) -> Result<SimilarityVector, SurrogateError> {
    let mean_current = mean_embedding(params, current)?;
    let mut cosines = Vec::with_capacity(historical.len());
    let mut sizes = Vec::with_capacity(historical.len());
    for set in historical {
        let mean = mean_embedding(params, set)?;
        cosines.push(cosine(&mean_current, &mean));
        sizes.push(set.len());
    }
    SimilarityVector::from_cosines(&cosines, &sizes)
}

fn mean_embedding(params: &NpParams, set: &HistorySet) -> Result<Vec<f64>, SurrogateError> {
    let embeddings = encode(params, set.observations())?;
    let r = embeddings.cols();
    let n = embeddings.rows();
    let mut mean = vec![0.0; r];
    for i in 0..n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += embeddings.get(i, j);
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    Ok(mean)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        warn!("zero-norm mean embedding; treating dataset similarity as 0");
        return 0.0;
    }
    dot / (na * nb)
}

/// Per-observation embeddings `E(x, y)`, one row per observation.
pub fn encode(params: &NpParams, observations: &[Observation]) -> Result<RealArray, SurrogateError> {
    if observations.is_empty() {
        return Err(SurrogateError::EmptyHistory);
    }
    let pairs = encoder_input(params.input_dim(), observations)?;
    Ok(mlp_eval(params.encoder(), &pairs)?)
}

/// Stacks observations into the encoder's `[x..., y]` input rows.
pub(crate) fn encoder_input(
    dim: usize,
    observations: &[Observation],
) -> Result<RealArray, SurrogateError> {
    let mut data = Vec::with_capacity(observations.len() * (dim + 1));
    for obs in observations {
        if obs.dim() != dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: dim,
                got: obs.dim(),
            });
        }
        data.extend_from_slice(obs.x());
        data.push(obs.y());
    }
    Ok(RealArray::new(observations.len(), dim + 1, data))
}

/// Stacks observation inputs into an `n x d` matrix.
pub(crate) fn x_matrix(dim: usize, observations: &[Observation]) -> RealArray {
    let mut data = Vec::with_capacity(observations.len() * dim);
    for obs in observations {
        data.extend_from_slice(obs.x());
    }
    RealArray::new(observations.len(), dim, data)
}

/// Validates query points and stacks them into an `n_q x d` matrix.
pub(crate) fn query_matrix(dim: usize, queries: &[Vec<f64>]) -> Result<RealArray, SurrogateError> {
    if queries.is_empty() {
        return Err(SurrogateError::InvalidInput("no query points".into()));
    }
    let mut data = Vec::with_capacity(queries.len() * dim);
    for q in queries {
        if q.len() != dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: dim,
                got: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::InvalidInput(
                "query coordinates must be finite".into(),
            ));
        }
        data.extend_from_slice(q);
    }
    Ok(RealArray::new(queries.len(), dim, data))
}

/// Handles into the shared computation graph.
pub(crate) struct NpGraph {
    pub vars: NpVars,
    pub mu: Var,
    pub sigma: Var,
    pub r_star: Var,
    pub attention: Vec<Var>,
    /// Leaf holding the query matrix; gradients flow back to it, which lets
    /// callers optimize over inputs as well as parameters.
    pub queries: Var,
}

/// Builds the full surrogate graph on `tape`.
///
/// `ctx_pairs` holds the `[x..., y]` rows of every context observation
/// (current dataset first, side datasets after, in order); `ctx_x` the same
/// rows without scores; `modulation` one multiplier per context column, or
/// `None` to leave the attention logits untouched. Passing an all-ones
/// multiplier is exactly equivalent to passing `None`.
pub(crate) fn build_np_graph(
    tape: &mut Tape,
    params: &NpParams,
    ctx_pairs: &RealArray,
    ctx_x: &RealArray,
    queries: &RealArray,
    modulation: Option<&[f64]>,
) -> Result<NpGraph, SurrogateError> {
    let d = params.input_dim();
    let n_ctx = ctx_pairs.rows();
    if n_ctx == 0 {
        return Err(SurrogateError::EmptyHistory);
    }
    for (cols, expected) in [
        (ctx_pairs.cols(), d + 1),
        (ctx_x.cols(), d),
        (queries.cols(), d),
    ] {
        if cols != expected {
            return Err(SurrogateError::DimensionMismatch {
                expected,
                got: cols,
            });
        }
    }
    if ctx_x.rows() != n_ctx {
        return Err(SurrogateError::InvalidInput(format!(
            "{} context inputs for {} context pairs",
            ctx_x.rows(),
            n_ctx
        )));
    }
    if let Some(m) = modulation {
        if m.len() != n_ctx {
            return Err(SurrogateError::InvalidInput(format!(
                "{} modulation weights for {} context columns",
                m.len(),
                n_ctx
            )));
        }
    }

    let vars = params.bind(tape);
    let pairs_leaf = tape.leaf(ctx_pairs.clone());
    let ctx_x_leaf = tape.leaf(ctx_x.clone());
    let query_leaf = tape.leaf(queries.clone());

    let r_ctx = params.encoder().forward(tape, &vars.encoder, pairs_leaf);
    let g_ctx = params.key_net().forward(tape, &vars.key_net, ctx_x_leaf);
    let g_query = params.key_net().forward(tape, &vars.key_net, query_leaf);

    let scale = match params.attention_scale() {
        AttentionScale::SqrtEmbed => (params.embed_dim() as f64).sqrt(),
        AttentionScale::SqrtHead => (params.head_dim() as f64).sqrt(),
    };
    let mod_leaf = modulation.map(|m| tape.leaf(RealArray::row_vector(m.to_vec())));

    let mut head_outputs = Vec::with_capacity(params.num_heads());
    let mut attention = Vec::with_capacity(params.num_heads());
    for head in &vars.heads {
        let q = tape.matmul(g_query, head.wq);
        let k = tape.matmul(g_ctx, head.wk);
        let scores = tape.matmul_nt(q, k);
        let scaled = tape.scale(scores, 1.0 / scale);
        let logits = match mod_leaf {
            Some(m) => tape.mul_row(scaled, m),
            None => scaled,
        };
        let attn = tape.softmax_rows(logits);
        let v = tape.matmul(r_ctx, head.wv);
        head_outputs.push(tape.matmul(attn, v));
        attention.push(attn);
    }
    let r_star = tape.concat_cols(&head_outputs);

    let decoder_in = tape.concat_cols(&[r_star, query_leaf]);
    let decoded = params.decoder().forward(tape, &vars.decoder, decoder_in);
    let mu = tape.slice_cols(decoded, 0, 1);
    let pre_std = tape.slice_cols(decoded, 1, 2);
    let sigma = sigma_from_preactivation(tape, pre_std);

    Ok(NpGraph {
        vars,
        mu,
        sigma,
        r_star,
        attention,
        queries: query_leaf,
    })
}

/// Maps the raw decoder output to a floored standard deviation.
fn sigma_from_preactivation(tape: &mut Tape, pre: Var) -> Var {
    let soft = tape.softplus(pre);
    tape.add_scalar(soft, STD_FLOOR)
}

fn read_predictions(tape: &Tape, mu: Var, sigma: Var) -> Vec<GaussianPrediction> {
    let mu = tape.value(mu);
    let sigma = tape.value(sigma);
    (0..mu.rows())
        .map(|i| GaussianPrediction {
            mean: mu.get(i, 0),
            std: sigma.get(i, 0),
        })
        .collect()
}

/// Query representations plus the per-head attention weights that produced
/// them. Attention rows are each a probability distribution over context
/// columns (current observations first, then side observations in order).
pub struct AttendOutput {
    pub r_star: RealArray,
    pub attention: Vec<RealArray>,
}

fn assemble_context<'a>(
    params: &NpParams,
    current: &'a HistorySet,
    historical: &'a [HistorySet],
) -> Result<(Vec<&'a Observation>, Option<Vec<f64>>), SurrogateError> {
    if current.is_empty() {
        return Err(SurrogateError::EmptyHistory);
    }
    let used: Vec<&HistorySet> = historical
        .iter()
        .filter(|set| {
            if set.is_empty() {
                warn!("skipping empty side dataset {:?}", set.task_id());
                false
            } else {
                true
            }
        })
        .collect();
    let mut observations: Vec<&Observation> = current.observations().iter().collect();
    for set in &used {
        observations.extend(set.observations().iter());
    }
    let modulation = if used.is_empty() {
        None
    } else {
        let owned: Vec<HistorySet> = used.iter().map(|&s| s.clone()).collect();
        let similarity = dataset_similarity(params, current, &owned)?;
        Some(similarity.expand_modulation(current.len()))
    };
    Ok((observations, modulation))
}

fn context_matrices(
    dim: usize,
    observations: &[&Observation],
) -> Result<(RealArray, RealArray), SurrogateError> {
    let owned: Vec<Observation> = observations.iter().map(|&o| o.clone()).collect();
    let pairs = encoder_input(dim, &owned)?;
    let xs = x_matrix(dim, &owned);
    Ok((pairs, xs))
}

/// Attends each query over the combined context and returns the pooled
/// representations together with the attention weights.
pub fn attend(
    params: &NpParams,
    current: &HistorySet,
    historical: &[HistorySet],
    queries: &[Vec<f64>],
) -> Result<AttendOutput, SurrogateError> {
    let (observations, modulation) = assemble_context(params, current, historical)?;
    let (pairs, xs) = context_matrices(params.input_dim(), &observations)?;
    let query_mat = query_matrix(params.input_dim(), queries)?;
    let mut tape = Tape::new();
    let graph = build_np_graph(
        &mut tape,
        params,
        &pairs,
        &xs,
        &query_mat,
        modulation.as_deref(),
    )?;
    Ok(AttendOutput {
        r_star: tape.value(graph.r_star).clone(),
        attention: graph
            .attention
            .iter()
            .map(|&a| tape.value(a).clone())
            .collect(),
    })
}

/// Decodes pooled representations at the given queries into Gaussian beliefs.
pub fn decode(
    params: &NpParams,
    r_star: &RealArray,
    queries: &[Vec<f64>],
) -> Result<Vec<GaussianPrediction>, SurrogateError> {
    let query_mat = query_matrix(params.input_dim(), queries)?;
    if r_star.rows() != query_mat.rows() || r_star.cols() != params.embed_dim() {
        return Err(SurrogateError::InvalidInput(format!(
            "representation block is {}x{}, expected {}x{}",
            r_star.rows(),
            r_star.cols(),
            query_mat.rows(),
            params.embed_dim()
        )));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let r_leaf = tape.leaf(r_star.clone());
    let q_leaf = tape.leaf(query_mat);
    let decoder_in = tape.concat_cols(&[r_leaf, q_leaf]);
    let decoded = params.decoder().forward(&mut tape, &vars.decoder, decoder_in);
    let mu = tape.slice_cols(decoded, 0, 1);
    let pre_std = tape.slice_cols(decoded, 1, 2);
    let sigma = sigma_from_preactivation(&mut tape, pre_std);
    Ok(read_predictions(&tape, mu, sigma))
}

/// Full posterior predictive pass: encode the context, attend, decode.
///
/// Scores in `current` and `historical` are taken as-is; callers that
/// standardize per dataset must apply the inverse transform to the returned
/// means and stds themselves.
pub fn predict(
    params: &NpParams,
    current: &HistorySet,
    historical: &[HistorySet],
    queries: &[Vec<f64>],
) -> Result<Vec<GaussianPrediction>, SurrogateError> {
    let (observations, modulation) = assemble_context(params, current, historical)?;
    let (pairs, xs) = context_matrices(params.input_dim(), &observations)?;
    let query_mat = query_matrix(params.input_dim(), queries)?;
    let mut tape = Tape::new();
    let graph = build_np_graph(
        &mut tape,
        params,
        &pairs,
        &xs,
        &query_mat,
        modulation.as_deref(),
    )?;
    Ok(read_predictions(&tape, graph.mu, graph.sigma))
}
