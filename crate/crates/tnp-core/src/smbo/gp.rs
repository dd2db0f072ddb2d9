//! Gaussian-process baseline surrogate with a Matérn-5/2 kernel.
//!
//! Scores are standardized internally, the length scale is picked from a
//! small grid by marginal likelihood, and predictions are mapped back to raw
//! units. The kernel amplitude is fixed at one in standardized space.

use crate::linalg::{cholesky, cholesky_jittered, solve_lower, solve_lower_transpose};
use crate::surrogate::{standardize, GaussianPrediction, HistorySet, ScoreStats, SurrogateError};

use super::SmboError;

/// Observation noise added to the Gram diagonal.
pub const GP_NOISE: f64 = 1e-6;

/// Candidate length scales, searched by maximum marginal likelihood.
pub const LENGTH_SCALE_GRID: [f64; 4] = [0.1, 0.2, 0.5, 1.0];

const MAX_JITTER: f64 = 1e-2;
const LN_TWO_PI: f64 = 1.837_877_066_409_345_3;

/// Matérn-5/2 correlation at Euclidean distance `r`, unit amplitude.
fn matern52(r: f64, length_scale: f64) -> f64 {
    let s = 5.0_f64.sqrt() * r / length_scale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// A fitted posterior: Cholesky factor, weights, and the standardization
/// needed to map predictions back to raw scores.
pub(crate) struct GpModel {
    xs: Vec<Vec<f64>>,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    stats: ScoreStats,
    pub(crate) length_scale: f64,
}

fn gram(xs: &[Vec<f64>], length_scale: f64) -> Vec<f64> {
    let n = xs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = matern52(distance(&xs[i], &xs[j]), length_scale);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] += GP_NOISE;
    }
    k
}

/// Cholesky of the noised Gram matrix; on indefiniteness the diagonal jitter
/// escalates tenfold from 1e-8 until 1e-2, after which fitting fails.
fn factor(n: usize, k: &[f64]) -> Result<Vec<f64>, SmboError> {
    if let Some(l) = cholesky(n, k) {
        return Ok(l);
    }
    cholesky_jittered(n, k, 1e-8, MAX_JITTER)
        .map(|(l, _)| l)
        .ok_or_else(|| {
            SmboError::GpFit(format!(
                "Gram matrix not positive definite even with jitter {MAX_JITTER}"
            ))
        })
}

fn log_marginal_likelihood(n: usize, chol: &[f64], z: &[f64], alpha: &[f64]) -> f64 {
    let fit: f64 = z.iter().zip(alpha).map(|(a, b)| a * b).sum();
    let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
    -0.5 * fit - log_det - 0.5 * n as f64 * LN_TWO_PI
}

/// Fits the baseline on a history: standardizes scores, then keeps the grid
/// length scale with the highest marginal likelihood (first on ties).
pub(crate) fn fit_gp(history: &HistorySet) -> Result<GpModel, SmboError> {
    if history.is_empty() {
        return Err(SurrogateError::EmptyHistory.into());
    }
    let (std_history, stats) = standardize(history);
    let xs: Vec<Vec<f64>> = std_history
        .observations()
        .iter()
        .map(|o| o.x().to_vec())
        .collect();
    let z: Vec<f64> = std_history.observations().iter().map(|o| o.y()).collect();
    let n = xs.len();

    let mut best: Option<(f64, GpModel)> = None;
    for &length_scale in &LENGTH_SCALE_GRID {
        let k = gram(&xs, length_scale);
        let chol = factor(n, &k)?;
        let alpha = solve_lower_transpose(n, &chol, &solve_lower(n, &chol, &z));
        let lml = log_marginal_likelihood(n, &chol, &z, &alpha);
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((
                lml,
                GpModel {
                    xs: xs.clone(),
                    chol,
                    alpha,
                    stats,
                    length_scale,
                },
            ));
        }
    }
    Ok(best.expect("non-empty grid").1)
}

impl GpModel {
    /// Posterior mean and spread at one point, in raw score units.
    pub(crate) fn predict_one(&self, x: &[f64]) -> GaussianPrediction {
        let n = self.xs.len();
        let k_star: Vec<f64> = self
            .xs
            .iter()
            .map(|xi| matern52(distance(xi, x), self.length_scale))
            .collect();
        let mean: f64 = k_star.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(n, &self.chol, &k_star);
        let reduction: f64 = v.iter().map(|c| c * c).sum();
        let var = (1.0 - reduction).max(0.0);
        GaussianPrediction {
            mean: self.stats.inverse(mean),
            std: var.sqrt() * self.stats.std,
        }
    }
}

/// Exact posterior of the Matérn-5/2 baseline at each candidate, in raw
/// score units.
pub fn gp_surrogate_predict(
    history: &HistorySet,
    candidates: &[Vec<f64>],
) -> Result<Vec<GaussianPrediction>, SmboError> {
    let model = fit_gp(history)?;
    let dim = history.dim().expect("non-empty history");
    for c in candidates {
        if c.len() != dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: dim,
                got: c.len(),
            }
            .into());
        }
    }
    Ok(candidates.iter().map(|c| model.predict_one(c)).collect())
}
