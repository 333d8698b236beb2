use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelParams};
use super::tape::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        let zeros = || params.tensors.iter().map(|t| Matrix::zeros(t.dim())).collect();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::HyperParams;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let hyper = HyperParams {
            hidden: 2,
            heads: 1,
            rounds: 1,
            leaky_slope: 0.2,
        };
        let mut p = ModelParams::zeros(hyper).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.0[0][[0, 0]] = 3.0;
        g.0[0][[0, 1]] = -0.01;
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &g);
        assert!((p.tensors[0][[0, 0]] + 1e-3).abs() < 1e-9);
        assert!((p.tensors[0][[0, 1]] - 1e-3).abs() < 1e-9);
        assert_eq!(p.tensors[0][[1, 0]], 0.0);
    }
}
