//! Expected improvement over the incumbent, and candidate selection.

use crate::surrogate::GaussianPrediction;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    const INV_SQRT_TWO_PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_TWO_PI * (-0.5 * z * z).exp()
}

/// Standard normal cumulative distribution, via a rational approximation of
/// the error function (absolute error below 1.5e-7).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    // Abramowitz-Stegun style rational approximation on |x|, odd-extended
    const A: [f64; 5] = [
        0.254_829_592,
        -0.284_496_736,
        1.421_413_741,
        -1.453_152_027,
        1.061_405_429,
    ];
    const P: f64 = 0.327_591_1;
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let poly = t * (A[0] + t * (A[1] + t * (A[2] + t * (A[3] + t * A[4]))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Expected amount by which a Gaussian belief `(mean, std)` exceeds
/// `y_best`. With zero spread this degenerates to the positive part of the
/// mean improvement. Never negative.
pub fn expected_improvement(mean: f64, std: f64, y_best: f64) -> f64 {
    assert!(std >= 0.0, "negative predictive spread {std}");
    let gap = mean - y_best;
    if std == 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    (gap * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

/// Index of the candidate maximizing expected improvement; ties break to the
/// lowest index, so selection is deterministic.
pub fn propose_next(predictions: &[GaussianPrediction], y_best: f64) -> usize {
    assert!(!predictions.is_empty(), "no candidates to choose from");
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in predictions.iter().enumerate() {
        let ei = expected_improvement(p.mean, p.std, y_best);
        if ei > best.1 {
            best = (i, ei);
        }
    }
    best.0
}
