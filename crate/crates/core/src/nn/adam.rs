use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Classic L2 penalty: `weight_decay * w` is added to the gradient before
    /// the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.003, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam moments, one array per parameter array in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        Self { config, step: 0, first: zeros.clone(), second: zeros }
    }

    /// One Adam update. Parameters and moments are rounded to f32 afterwards
    /// so the whole training state is representable in a checkpoint.
    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) -> Result<()> {
        let c = self.config;
        let grads = grad.arrays();
        let mut arrays = params.arrays_mut();
        if grads.len() != arrays.len() || self.first.len() != arrays.len() {
            return invalid("optimizer state does not match the parameter layout");
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (((w, g), m), v) in arrays.iter_mut().zip(grads).zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
            for i in 0..w.len() {
                let gi = g[i] + c.weight_decay * w[i];
                m[i] = f32_round(c.beta1 * m[i] + (1.0 - c.beta1) * gi);
                v[i] = f32_round(c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi);
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] = f32_round(w[i] - c.lr * m_hat / (v_hat.sqrt() + c.eps));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::NetConfig;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = ModelParams::zeros(&NetConfig::tiny()).unwrap();
        let mut g = p.zeros_like();
        g.head_out.bias[0] = 2.5;
        g.stem.weight[0] = -0.1;
        let mut adam = AdamState::new(AdamConfig { weight_decay: 0.0, ..AdamConfig::default() }, &p);
        adam.step(&mut p, &g).unwrap();
        // Bias-corrected first step is lr * g / (|g| + eps).
        assert!((p.head_out.bias[0] + 0.003).abs() < 1e-7);
        assert!((p.stem.weight[0] - 0.003).abs() < 1e-7);
        assert_eq!(p.stem.weight[1], 0.0);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn weight_decay_shrinks_weights_without_gradient() {
        let mut p = ModelParams::zeros(&NetConfig::tiny()).unwrap();
        p.stem.weight[0] = 0.5;
        let g = p.zeros_like();
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        adam.step(&mut p, &g).unwrap();
        assert!(p.stem.weight[0] < 0.5);
    }
}
