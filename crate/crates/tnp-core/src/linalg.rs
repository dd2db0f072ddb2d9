//! Small dense linear-algebra helpers shared by the Gaussian-process code
//! paths (surrogate baseline and task sampling).

/// Attempts a Cholesky factorization of the symmetric matrix `a` (`n x n`,
/// row-major), returning the lower factor `L` with `L L^T = a`.
pub(crate) fn cholesky(n: usize, a: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Cholesky with diagonal jitter escalation: first tries `a` plus
/// `base_jitter` on the diagonal, then multiplies the jitter by 10 until it
/// exceeds `max_jitter`. Returns the factor and the jitter that succeeded.
pub(crate) fn cholesky_jittered(
    n: usize,
    a: &[f64],
    base_jitter: f64,
    max_jitter: f64,
) -> Option<(Vec<f64>, f64)> {
    let mut jitter = base_jitter;
    loop {
        let mut work = a.to_vec();
        if jitter > 0.0 {
            for i in 0..n {
                work[i * n + i] += jitter;
            }
        }
        if let Some(l) = cholesky(n, &work) {
            return Some((l, jitter));
        }
        if jitter == 0.0 {
            jitter = base_jitter.max(f64::MIN_POSITIVE);
            if jitter == 0.0 {
                jitter = 1e-12;
            }
            continue;
        }
        jitter *= 10.0;
        if jitter > max_jitter {
            return None;
        }
    }
}

/// Solves `L y = b` for lower-triangular `L`.
pub(crate) fn solve_lower(n: usize, l: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    y
}

/// Solves `L^T x = y` for lower-triangular `L`.
pub(crate) fn solve_lower_transpose(n: usize, l: &[f64], y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    x
}
