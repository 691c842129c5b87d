use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for Adam with bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) {
        assert_eq!(params.len(), self.first.len(), "parameter count changed");
        assert_eq!(grads.len(), self.first.len(), "gradient count mismatch");
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let g = &grads[k];
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for idx in 0..g.data.len() {
                let gi = g.data[idx];
                m.data[idx] = beta1 * m.data[idx] + (1.0 - beta1) * gi;
                v.data[idx] = beta2 * v.data[idx] + (1.0 - beta2) * gi * gi;
                let mhat = m.data[idx] / c1;
                let vhat = v.data[idx] / c2;
                p.data[idx] -= learning_rate * mhat / (vhat.sqrt() + epsilon);
            }
        }
    }
}
