//! Adam optimizer over one flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Adam hyperparameters. Defaults: lr 1e-2, beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates and step counter for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    timestep: u64,
    hyper: AdamHyper,
}

impl AdamState {
    pub fn new(param_count: usize, hyper: AdamHyper) -> Self {
        AdamState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            timestep: 0,
            hyper,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "adam state holds {} parameters, got params={} grads={}",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient passed to adam".into()));
        }
        self.timestep += 1;
        let t = self.timestep as i32;
        let h = self.hyper;
        let m_corr = 1.0 - h.beta1.powi(t);
        let v_corr = 1.0 - h.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = h.beta1 * self.first_moment[i] + (1.0 - h.beta1) * g;
            self.second_moment[i] = h.beta2 * self.second_moment[i] + (1.0 - h.beta2) * g * g;
            let m_hat = self.first_moment[i] / m_corr;
            let v_hat = self.second_moment[i] / v_corr;
            params[i] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
        }
        Ok(())
    }
}
