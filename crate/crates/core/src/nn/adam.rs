//! Adam optimizer with bias correction.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Per-parameter Adam state: first and second moment estimates plus the
/// step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state (m = v = 0, t = 0) with the canonical defaults
    /// lr = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step(param: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(&state.m) {
        return Err(Error::Shape {
            op: "adam_step",
            expected: format!("{:?}", param.shape()),
            got: format!("grad {:?}, state {:?}", grad.shape(), state.m.shape()),
        });
    }
    state.t += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    let p = param.data_mut();
    let g = grad.data();
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
