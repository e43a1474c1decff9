//! Adam with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Moments shaped like the given parameter list, step 0.
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One Adam step over a parameter list. Panics on shape mismatch or
/// non-finite gradients.
pub fn adam_update(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, lr: f64) {
    assert!(lr > 0.0, "learning rate must be positive");
    assert_eq!(params.len(), grads.len(), "adam: parameter/gradient count");
    assert_eq!(params.len(), state.first_moment.len(), "adam: state size");
    for g in grads {
        assert!(g.all_finite(), "adam: non-finite gradient");
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        assert_eq!(p.len(), g.len(), "adam: shape mismatch at parameter {}", i);
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let pd = p.data_mut();
        for k in 0..g.len() {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            pd[k] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}

/// Scale `grads` so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
    norm
}
