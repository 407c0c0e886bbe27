//! Adam with bias correction, plus the stepwise learning-rate decay.

use crate::error::{Error, Result};

/// Adam moment estimates and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    /// Fresh state with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// One Adam update in place. `lr_multiplier` scales the base rate for the
/// current epoch; it never touches the moment state.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grad: &[f64],
    lr_multiplier: f64,
) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam state sized for {} parameters, got params {} and grad {}",
            state.m.len(),
            params.len(),
            grad.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let lr = state.learning_rate * lr_multiplier;
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// Multiplier gamma^floor(epoch / period) applied to the base rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub gamma: f64,
    pub period: usize,
}

impl StepDecay {
    pub fn new(gamma: f64, period: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("decay gamma must be in (0, 1], got {gamma}")));
        }
        if period == 0 {
            return Err(Error::Config("decay period must be positive".into()));
        }
        Ok(Self { gamma, period })
    }

    pub fn lr_multiplier(&self, epoch: usize) -> f64 {
        self.gamma.powi((epoch / self.period) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(3, 0.01);
        let mut params = vec![1.0, -2.0, 0.5];
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        // f(theta) = theta^2/2 at theta=1: g=1. Bias correction makes the
        // first update lr * 1 / (1 + eps), so theta moves to ~0.999.
        let mut state = AdamState::new(1, 0.001);
        let mut params = vec![1.0];
        adam_step(&mut state, &mut params, &[1.0], 1.0).unwrap();
        assert!((params[0] - 0.999).abs() < 1e-9, "got {}", params[0]);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut state = AdamState::new(2, 0.05);
            let mut params = vec![0.3, -0.7];
            for k in 0..50 {
                let g = [params[0] + k as f64 * 0.01, params[1] * 2.0];
                adam_step(&mut state, &mut params, &g, 1.0).unwrap();
            }
            (params, state)
        };
        let (pa, sa) = run();
        let (pb, sb) = run();
        assert_eq!(pa, pb);
        assert_eq!(sa, sb);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut state = AdamState::new(1, 0.01);
        let mut params = vec![1.0];
        let err = adam_step(&mut state, &mut params, &[f64::NAN], 1.0);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn converges_on_convex_quadratic() {
        // f(a, b) = (a - 1)^2/2 + 2 (b + 0.5)^2
        let mut state = AdamState::new(2, 0.01);
        let mut params = vec![3.0, 2.0];
        for _ in 0..1000 {
            let g = [params[0] - 1.0, 4.0 * (params[1] + 0.5)];
            adam_step(&mut state, &mut params, &g, 1.0).unwrap();
        }
        assert!((params[0] - 1.0).abs() < 1e-3, "a = {}", params[0]);
        assert!((params[1] + 0.5).abs() < 1e-3, "b = {}", params[1]);
    }

    #[test]
    fn step_decay_schedule() {
        let decay = StepDecay::new(0.99, 100).unwrap();
        assert_eq!(decay.lr_multiplier(0), 1.0);
        assert_eq!(decay.lr_multiplier(99), 1.0);
        assert!((decay.lr_multiplier(100) - 0.99).abs() < 1e-15);
        assert!((decay.lr_multiplier(250) - 0.9801).abs() < 1e-15);
    }

    #[test]
    fn bad_decay_settings_rejected() {
        assert!(StepDecay::new(0.0, 100).is_err());
        assert!(StepDecay::new(1.5, 100).is_err());
        assert!(StepDecay::new(0.9, 0).is_err());
    }
}
