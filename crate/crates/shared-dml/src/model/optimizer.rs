//! Adaptive-moment parameter updates.

use crate::error::{Error, Result};

use super::{GradientSet, ModelParams};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplier on the learning rate of the correlation regressor's
    /// tensors. 1.0 trains it at the shared rate.
    pub regressor_lr_scale: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> AdamHyper {
        AdamHyper { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, regressor_lr_scale: 1.0 }
    }
}

/// Per-parameter first/second moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, hyper: AdamHyper) -> OptimizerState {
        let shapes: Vec<usize> = params.flat_views().iter().map(|(_, s)| s.len()).collect();
        OptimizerState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            hyper,
        }
    }
}

/// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected
/// moments. Deterministic; errors on non-finite gradients, naming the tensor.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<()> {
    grads.check_congruent(params)?;
    let grad_views = grads.flat_views();
    if state.m.len() != grad_views.len() {
        return Err(Error::Internal("optimizer state does not match the parameter set".into()));
    }
    for (t, (name, g)) in grad_views.iter().enumerate() {
        if state.m[t].len() != g.len() {
            return Err(Error::Internal(format!("optimizer state shape mismatch on `{name}`")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { tensor: name.clone() });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper.clone();
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);

    let mut param_views = params.flat_views_mut();
    for (tensor, (name, g)) in grad_views.iter().enumerate() {
        let lr = if ModelParams::is_encoder_side(name) {
            h.learning_rate
        } else {
            h.learning_rate * h.regressor_lr_scale
        };
        let m = &mut state.m[tensor];
        let v = &mut state.v[tensor];
        let p = &mut param_views[tensor].1;
        for i in 0..g.len() {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + h.epsilon);
        }
    }
    Ok(())
}
