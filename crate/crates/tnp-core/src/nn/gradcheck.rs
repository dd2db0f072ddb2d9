//! Central finite-difference validation of analytic gradients.

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct FdCheckReport {
    pub pass: bool,
    /// Largest per-parameter relative error encountered.
    pub max_rel_err: f64,
    /// Index attaining `max_rel_err`, if any parameter was checked.
    pub worst_index: Option<usize>,
    /// Indices (with their relative error) exceeding the tolerance.
    pub failures: Vec<(usize, f64)>,
}

/// Compares `analytic` against central finite differences of `f` at `params`.
///
/// For each coordinate the relative error is
/// `|fd - analytic| / max(|fd|, |analytic|, 1e-6)`; the absolute guard keeps
/// roundoff noise on near-zero gradients from registering as failures. The
/// check passes when every coordinate stays within `tol`.
pub fn finite_diff_check(
    mut f: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    params: &[f64],
    h: f64,
    tol: f64,
) -> FdCheckReport {
    assert_eq!(
        analytic.len(),
        params.len(),
        "analytic gradient and parameter vector lengths differ"
    );
    let mut point = params.to_vec();
    let mut max_rel_err = 0.0;
    let mut worst_index = None;
    let mut failures = Vec::new();
    for i in 0..params.len() {
        point[i] = params[i] + h;
        let up = f(&point);
        point[i] = params[i] - h;
        let down = f(&point);
        point[i] = params[i];
        let fd = (up - down) / (2.0 * h);
        let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
        let rel = (fd - analytic[i]).abs() / denom;
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = Some(i);
        }
        if rel > tol {
            failures.push((i, rel));
        }
    }
    FdCheckReport {
        pass: failures.is_empty(),
        max_rel_err,
        worst_index,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        // f(p) = sum p_i^2, gradient 2p.
        let params = [0.3, -1.2, 2.0];
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let report = finite_diff_check(
            |p| p.iter().map(|x| x * x).sum(),
            &analytic,
            &params,
            1e-5,
            1e-6,
        );
        assert!(report.pass, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let params = [0.3, -1.2, 2.0];
        let doubled: Vec<f64> = params.iter().map(|p| 4.0 * p).collect();
        let report = finite_diff_check(
            |p| p.iter().map(|x| x * x).sum(),
            &doubled,
            &params,
            1e-5,
            1e-3,
        );
        assert!(!report.pass);
        assert!(!report.failures.is_empty());
        assert!(report.worst_index.is_some());
    }
}
