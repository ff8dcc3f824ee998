//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Global-norm threshold; gradients with a larger norm are rescaled.
    /// `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            grad_clip: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn new(learning_rate: f64, grad_clip: Option<f64>) -> Self {
        AdamConfig {
            learning_rate,
            grad_clip,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.grad_clip.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::param(
                "Adam needs a positive learning rate and clip value",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::param("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

pub fn clip_global_norm(grad: &[f64], limit: f64) -> Vec<f64> {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > limit {
        let s = limit / norm;
        grad.iter().map(|g| g * s).collect()
    } else {
        grad.to_vec()
    }
}

/// One descent step, updating `theta` in place.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], cfg: &AdamConfig) {
    let g = match cfg.grad_clip {
        Some(limit) => clip_global_norm(grad, limit),
        None => grad.to_vec(),
    };
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for i in 0..theta.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        theta[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut theta = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut s, &mut theta, &[0.0, 0.0], &AdamConfig::default());
        assert_eq!(theta, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        let mut theta = vec![0.0; 3];
        let mut s = AdamState::new(3);
        let cfg = AdamConfig::new(0.01, None);
        adam_step(&mut s, &mut theta, &[3.0, -0.5, 1e-2], &cfg);
        // m̂ = g, v̂ = g², step = η g/(|g|+ε)
        for (t, g) in theta.iter().zip([3.0f64, -0.5, 1e-2]) {
            let expect = -0.01 * g / (g.abs() + 1e-8);
            assert!((t - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn clipping_rescales_to_the_limit() {
        let g = clip_global_norm(&[6.0, 8.0], 1.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        assert_eq!(clip_global_norm(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
    }
}
