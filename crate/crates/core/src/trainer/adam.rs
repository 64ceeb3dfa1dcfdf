use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter used for bias
/// correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }
}

/// One Adam step with L2 weight decay folded into the gradient.
///
/// Leaves `params` and `state` untouched if any updated value would be
/// non-finite.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam: {n} params, {} grads, {}/{} moments",
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    let step = state.step + 1;
    let bc1 = 1.0 - BETA1.powi(step as i32);
    let bc2 = 1.0 - BETA2.powi(step as i32);

    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let g = grads[i] + weight_decay * params[i];
        let mi = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        let vi = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let p = params[i] - lr * (mi / bc1) / ((vi / bc2).sqrt() + EPSILON);
        if !p.is_finite() || !vi.is_finite() {
            return Err(Error::Numeric(format!("adam update of parameter {i} is not finite")));
        }
        m.push(mi);
        v.push(vi);
        next.push(p);
    }
    params.copy_from_slice(&next);
    state.m = m;
    state.v = v;
    state.step = step;
    Ok(())
}
