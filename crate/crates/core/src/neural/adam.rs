use serde::{Deserialize, Serialize};

use super::{DenseNetwork, GradientSet};

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    #[serde(skip)]
    first: Option<GradientSet>,
    #[serde(skip)]
    second: Option<GradientSet>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            first: None,
            second: None,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn update_param(
    p: &mut f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    state: &AdamState,
    c1: f64,
    c2: f64,
) {
    *m = state.beta1 * *m + (1.0 - state.beta1) * g;
    *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
}

/// One Adam descent step. Non-finite gradients leave the network and the
/// optimizer untouched; the return value reports whether the step was applied.
pub fn adam_step(net: &mut DenseNetwork, grads: &GradientSet, state: &mut AdamState) -> bool {
    assert!(grads.congruent_with(net), "gradient shapes do not match network");
    if !grads.is_finite() {
        log::warn!("skipping Adam step {}: non-finite gradient", state.step + 1);
        return false;
    }
    let mut first = state.first.take().unwrap_or_else(|| GradientSet::zeros_like(net));
    let mut second = state.second.take().unwrap_or_else(|| GradientSet::zeros_like(net));

    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    for l in 0..net.weights.len() {
        let w = net.weights[l].as_mut_slice();
        let g = grads.weights[l].as_slice();
        let m = first.weights[l].as_mut_slice();
        let v = second.weights[l].as_mut_slice();
        for i in 0..w.len() {
            update_param(&mut w[i], g[i], &mut m[i], &mut v[i], state, c1, c2);
        }
        let b = net.biases[l].as_mut_slice();
        let g = grads.biases[l].as_slice();
        let m = first.biases[l].as_mut_slice();
        let v = second.biases[l].as_mut_slice();
        for i in 0..b.len() {
            update_param(&mut b[i], g[i], &mut m[i], &mut v[i], state, c1, c2);
        }
    }
    state.first = Some(first);
    state.second = Some(second);
    true
}

/// Adam on a single scalar parameter (used for the entropy temperature).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarAdam {
    m: f64,
    v: f64,
    pub step: u64,
    pub learning_rate: f64,
}

impl ScalarAdam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            m: 0.0,
            v: 0.0,
            step: 0,
            learning_rate,
        }
    }

    pub fn step(&mut self, param: &mut f64, grad: f64) -> bool {
        if !grad.is_finite() {
            log::warn!("skipping scalar Adam step: non-finite gradient");
            return false;
        }
        let mut reference = AdamState::new(self.learning_rate);
        self.step += 1;
        reference.step = self.step;
        let c1 = 1.0 - reference.beta1.powi(self.step as i32);
        let c2 = 1.0 - reference.beta2.powi(self.step as i32);
        update_param(param, grad, &mut self.m, &mut self.v, &reference, c1, c2);
        true
    }
}
