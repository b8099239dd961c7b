use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state: bias-corrected first and second moments per parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update. Every parameter must have a gradient of its own shape.
    pub fn step(&mut self, params: &mut Parameters, grads: &HashMap<String, Tensor>) -> Result<()> {
        for (name, p) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::contract(format!("no gradient for parameter `{name}`")))?;
            if g.shape() != p.shape() {
                return Err(Error::shape("adam gradient", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let g = &grads[name];
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; p.len()], vec![0.0; p.len()]));
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let update = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
                // Fixed -inf entries (impossible CRF transitions) never move.
                if w.is_finite() {
                    *w -= update;
                }
            }
        }
        Ok(())
    }
}
