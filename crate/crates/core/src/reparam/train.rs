//! Least-squares fitting of a reparameterization to a target field.

use serde::{Deserialize, Serialize};

use super::{Bounding, Reparam};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainOptions {
    pub learning_rate: f64,
    /// Iterations always run (unless the target is met earlier).
    pub iterations: usize,
    pub target_mse: f64,
    /// Extra iterations allowed when `target_mse` is not yet met.
    pub max_iterations: usize,
    /// Before iterating, move the output bias so the mean raw output sits
    /// at the logit of the target (sigmoid bounding only).
    pub bias_warm_start: bool,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            learning_rate: 1e-3,
            iterations: 300,
            target_mse: 1e-4,
            max_iterations: 5000,
            bias_warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Plateau test: stop when the best loss improved by less than
    /// `plateau_tolerance` (relative) over `plateau_window` iterations.
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    /// Multiplicative learning-rate decay applied every `plateau_window`
    /// iterations without improvement beyond 1e-3 (relative).
    pub decay: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learning_rate: 1e-2,
            max_iterations: 3000,
            plateau_window: 100,
            plateau_tolerance: 1e-10,
            decay: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: Vec<f64>,
    pub mse: f64,
    pub iterations: usize,
    /// False when a pretraining target was not reached within the cap.
    pub reached_target: bool,
}

fn mse_and_grad(reparam: &Reparam, theta: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let rho = reparam.density(theta)?;
    let n = rho.len() as f64;
    let mut mse = 0.0;
    let w: Vec<f64> = rho
        .iter()
        .zip(target)
        .map(|(r, t)| {
            mse += (r - t) * (r - t);
            2.0 * (r - t) / n
        })
        .collect();
    Ok((mse / n, reparam.vjp(theta, &w)?))
}

fn check_target(reparam: &Reparam, target: &[f64]) -> Result<()> {
    let (nx, ny) = reparam.shape();
    if target.len() != nx * ny {
        return Err(Error::param(format!(
            "target has {} values, mesh has {}",
            target.len(),
            nx * ny
        )));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("target contains non-finite values"));
    }
    Ok(())
}

/// Trains toward a uniform field of value `v0`.
pub fn pretrain_uniform(
    reparam: &Reparam,
    theta0: &[f64],
    v0: f64,
    opts: &PretrainOptions,
) -> Result<FitReport> {
    let (nx, ny) = reparam.shape();
    if reparam.is_direct() {
        return Ok(FitReport {
            params: vec![v0; nx * ny],
            mse: 0.0,
            iterations: 0,
            reached_target: true,
        });
    }
    let target = vec![v0; nx * ny];
    let cfg = AdamConfig::new(opts.learning_rate, None);
    let mut state = AdamState::new(theta0.len());
    let mut theta = theta0.to_vec();
    if opts.bias_warm_start && reparam.bounding() == Bounding::Sigmoid && v0 > 0.0 && v0 < 1.0 {
        if let Some(k) = reparam.output_bias_index() {
            let raw = reparam.raw_forward(&theta)?.raw;
            let mean = raw.iter().sum::<f64>() / raw.len() as f64;
            theta[k] += (v0 / (1.0 - v0)).ln() - mean;
        }
    }
    let cap = opts.iterations.max(opts.max_iterations);
    let mut it = 0;
    loop {
        let (mse, grad) = mse_and_grad(reparam, &theta, &target)?;
        if (mse < opts.target_mse && it >= opts.iterations.min(1)) || it >= cap {
            return Ok(FitReport {
                params: theta,
                mse,
                iterations: it,
                reached_target: mse < opts.target_mse,
            });
        }
        adam_step(&mut state, &mut theta, &grad, &cfg);
        it += 1;
    }
}

/// Minimizes the mean squared error to `target`. Returns the best
/// parameters seen.
pub fn fit_to_density(
    reparam: &Reparam,
    theta0: &[f64],
    target: &[f64],
    opts: &FitOptions,
) -> Result<FitReport> {
    check_target(reparam, target)?;
    if reparam.is_direct() {
        return Ok(FitReport {
            params: target.to_vec(),
            mse: 0.0,
            iterations: 0,
            reached_target: true,
        });
    }
    let mut cfg = AdamConfig::new(opts.learning_rate, None);
    let mut state = AdamState::new(theta0.len());
    let mut theta = theta0.to_vec();
    let mut best = (f64::INFINITY, theta.clone());
    let mut window_start = f64::INFINITY;
    let mut it = 0;
    while it <= opts.max_iterations {
        let (mse, grad) = mse_and_grad(reparam, &theta, target)?;
        if mse < best.0 {
            best = (mse, theta.clone());
        }
        if mse == 0.0 {
            break;
        }
        if opts.plateau_window > 0 && it % opts.plateau_window == 0 && it > 0 {
            let gain = (window_start - best.0) / window_start;
            if gain < opts.plateau_tolerance {
                break;
            }
            if gain < 1e-3 {
                cfg.learning_rate *= opts.decay;
            }
            window_start = best.0;
        } else if it == 0 {
            window_start = mse;
        }
        if it == opts.max_iterations {
            break;
        }
        adam_step(&mut state, &mut theta, &grad, &cfg);
        it += 1;
    }
    Ok(FitReport {
        params: best.1,
        mse: best.0,
        iterations: it,
        reached_target: true,
    })
}
