use serde::{Deserialize, Serialize};

use super::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Array,
    second: Array,
    step: u64,
}

impl AdamState {
    pub fn new(extents: &[usize], config: AdamConfig) -> Self {
        AdamState {
            config,
            first: Array::zeros(extents),
            second: Array::zeros(extents),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Array {
        &self.first
    }

    pub fn second_moment(&self) -> &Array {
        &self.second
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn update(&mut self, params: &mut Array, grads: &Array) -> Result<()> {
        if params.extents() != self.first.extents() || grads.extents() != self.first.extents() {
            return Err(Error::shape(format!(
                "adam: params {:?}, grads {:?} and moments {:?} must agree",
                params.extents(),
                grads.extents(),
                self.first.extents()
            )));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let m = self.first.data_mut();
        let v = self.second.data_mut();
        for (((p, &g), m), v) in params
            .data_mut()
            .iter_mut()
            .zip(grads.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Functional form: returns updated parameters and state.
pub fn adam_step(state: &AdamState, params: &Array, grads: &Array) -> Result<(Array, AdamState)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.update(&mut params, grads)?;
    Ok((params, state))
}
