//! Adam updates with bias correction.

use super::params::{Gradients, PolicyParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: PolicyParams,
    v: PolicyParams,
}

impl OptimizerState {
    pub fn new(params: &PolicyParams, cfg: AdamConfig) -> OptimizerState {
        OptimizerState {
            cfg,
            step: 0,
            m: PolicyParams::zeros(params.dims),
            v: PolicyParams::zeros(params.dims),
        }
    }
}

/// One Adam step in place.
pub fn adam_step(params: &mut PolicyParams, grads: &Gradients, state: &mut OptimizerState) {
    state.step += 1;
    let t = state.step as i32;
    let cfg = state.cfg;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let g_tensors = grads.tensors.tensors();
    let mut p_tensors = params.tensors_mut();
    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    assert_eq!(p_tensors.len(), g_tensors.len(), "gradient shape congruence");
    for i in 0..p_tensors.len() {
        let p = &mut p_tensors[i].1;
        let g = g_tensors[i].2;
        let m = &mut m_tensors[i].1;
        let v = &mut v_tensors[i].1;
        assert_eq!(p.len(), g.len(), "gradient shape congruence");
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::params::ModelDims;

    fn setup() -> (PolicyParams, OptimizerState) {
        let params = PolicyParams::init(ModelDims::new(4, 2, 3, 1), 1);
        let state = OptimizerState::new(&params, AdamConfig::default());
        (params, state)
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // closed form: with g = 1, m_hat = 1, v_hat = 1, so the update is
        // lr / (1 + eps)
        let (mut params, mut state) = setup();
        let before = params.head_b[0];
        let mut grads = Gradients::zeros_like(&params);
        grads.tensors.head_b[0] = 1.0;
        adam_step(&mut params, &grads, &mut state);
        let moved = before - params.head_b[0];
        assert!((moved - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut params, mut state) = setup();
        let snapshot = params.clone();
        let grads = Gradients::zeros_like(&params);
        adam_step(&mut params, &grads, &mut state);
        assert_eq!(params, snapshot);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn equal_gradients_get_equal_updates() {
        let (mut params, mut state) = setup();
        params.head_b[0] = 0.5;
        params.head_b[1] = 0.5;
        let mut grads = Gradients::zeros_like(&params);
        grads.tensors.head_b[0] = 0.25;
        grads.tensors.head_b[1] = 0.25;
        adam_step(&mut params, &grads, &mut state);
        assert_eq!(params.head_b[0], params.head_b[1]);
    }
}
