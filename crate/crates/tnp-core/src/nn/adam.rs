//! Adam optimizer over flat parameter vectors.

use super::NnError;

/// Adam hyperparameters. The learning rate default matches the engine-wide
/// training default; tests and callers override it freely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }
}

/// First/second moment estimates congruent with a flat parameter vector, plus
/// the step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(num_params: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }
}

/// One Adam update in place. The step counter advances exactly once per call;
/// non-finite gradients abort with a diagnostic before touching any state.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(NnError::LengthMismatch {
            params: params.len(),
            grads: grads.len(),
        });
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGradient { index });
    }
    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        alpha,
        beta1,
        beta2,
        eps,
    } = state.cfg;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut state = AdamState::new(3, AdamConfig::with_alpha(0.1));
        let mut params = vec![1.0, -2.0, 0.5];
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_matches_explicit_recurrence() {
        // Evaluate the published recurrence by hand for t = 1 and compare.
        let cfg = AdamConfig {
            alpha: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let grads = [0.3, -1.2, 4.0];
        let start = [0.5, 0.5, 0.5];
        let mut params = start;
        let mut state = AdamState::new(3, cfg);
        adam_step(&mut state, &mut params, &grads).unwrap();
        for i in 0..3 {
            let m = (1.0 - cfg.beta1) * grads[i];
            let v = (1.0 - cfg.beta2) * grads[i] * grads[i];
            let m_hat = m / (1.0 - cfg.beta1);
            let v_hat = v / (1.0 - cfg.beta2);
            let expected = start[i] - cfg.alpha * m_hat / (v_hat.sqrt() + cfg.eps);
            assert_abs_diff_eq!(params[i], expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn identical_sequences_are_bit_reproducible() {
        let grads1 = [0.4, -0.2];
        let grads2 = [-0.9, 1.1];
        let run = || {
            let mut params = vec![0.1, 0.2];
            let mut state = AdamState::new(2, AdamConfig::with_alpha(0.05));
            adam_step(&mut state, &mut params, &grads1).unwrap();
            adam_step(&mut state, &mut params, &grads2).unwrap();
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_aborts_with_index() {
        let mut state = AdamState::new(2, AdamConfig::default());
        let mut params = vec![0.0, 0.0];
        let err = adam_step(&mut state, &mut params, &[0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { index: 1 }));
        // The failed call must not have advanced the step counter.
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut state = AdamState::new(2, AdamConfig::default());
        let mut params = vec![0.0, 0.0, 0.0];
        assert!(adam_step(&mut state, &mut params, &[0.0, 0.0]).is_err());
    }
}
