//! Adam optimizer with bias correction.

use super::Param;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter optimizer state.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update from `param.grad`. Frozen parameters are
/// left untouched (state included).
pub fn adam_step(param: &mut Param, state: &mut AdamState) {
    if param.frozen {
        return;
    }
    assert_eq!(param.len(), state.first_moment.len(), "moment shape");
    state.step_count += 1;
    let t = state.step_count as i32;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    for i in 0..param.len() {
        let g = param.grad[i];
        let m = h.beta1 * state.first_moment[i] + (1.0 - h.beta1) * g;
        let v = h.beta2 * state.second_moment[i] + (1.0 - h.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        param.value.data[i] -= h.lr * m_hat / (v_hat.sqrt() + h.epsilon);
    }
}
