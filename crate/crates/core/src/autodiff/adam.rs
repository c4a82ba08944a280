//! Adam optimizer over named parameter stores.

use super::{Gradients, NetworkParams, Tensor};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Hyperparameters; the defaults are the standard ones.
#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Per-parameter learning-rate overrides, applied by exact name. Used to
    /// run degeneration and reconstruction parameters at different rates
    /// inside one optimizer.
    pub lr_overrides: BTreeMap<String, f64>,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_overrides: BTreeMap::new(),
        }
    }

    fn lr_for(&self, name: &str) -> f64 {
        self.lr_overrides.get(name).copied().unwrap_or(self.lr)
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction, in place. Rejects non-finite
/// gradients before touching any state, and verifies every updated parameter
/// stays finite.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    for (name, grad) in grads {
        if !grad.is_finite() {
            return Err(Error::solver(
                format!("non-finite gradient for parameter '{name}'; step rejected"),
                vec![],
            ));
        }
        if let Some(p) = params.get(name) {
            if p.shape() != grad.shape() {
                return Err(Error::shape(format!(
                    "gradient shape {:?} != parameter shape {:?} for '{name}'",
                    grad.shape(),
                    p.shape()
                )));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);

    for (name, param) in params.iter_mut() {
        let grad = match grads.get(name) {
            Some(g) => g,
            None => continue,
        };
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(param.shape()));
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(param.shape()));
        let lr = config.lr_for(name);
        for ((p, &g), (m, v)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
        if !param.is_finite() {
            return Err(Error::NonFinite(format!("parameter '{name}' after Adam step")));
        }
    }
    Ok(())
}
