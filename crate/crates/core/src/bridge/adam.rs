//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Scale `g` so its Euclidean norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= s);
    }
    norm
}

/// One clipped Adam update in place; returns the pre-clip gradient norm.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, clip_norm: f64) -> Result<f64> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.len()],
            got: vec![grads.len(), state.m.len()],
        });
    }
    let mut g = grads.to_vec();
    let norm = clip_global_norm(&mut g, clip_norm);
    state.step += 1;
    let (b1, b2) = (AdamState::BETA1, AdamState::BETA2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for i in 0..params.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + AdamState::EPS);
    }
    Ok(norm)
}
