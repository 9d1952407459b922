use serde::{Deserialize, Serialize};

use super::OptError;
use crate::encode::ParameterField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.25,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }
}

/// One decoupled-weight-decay Adam update:
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p`.
pub fn adamw_step(
    state: &mut OptimizerState,
    params: &mut ParameterField,
    grad: &[f64],
) -> Result<(), OptError> {
    let n = params.values().len();
    if grad.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(OptError::DimensionMismatch(format!(
            "{} params, {} gradient entries, {} moments",
            n,
            grad.len(),
            state.first_moment.len()
        )));
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - c.beta1.powi(t);
    let bias2 = 1.0 - c.beta2.powi(t);
    for (((p, &g), m), v) in params
        .values_mut()
        .iter_mut()
        .zip(grad.iter())
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.eps)) + c.learning_rate * c.weight_decay * *p;
    }
    Ok(())
}
