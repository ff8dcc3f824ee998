//! PSNR-based expressivity: how well an architecture can reproduce given
//! designs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reparam::{fit_to_density, ArchitectureSpec, CnnConfig, FitOptions, Reparam};

/// Parameter budgets relative to the element count, besides the ~1× case.
pub const EXPRESSIVITY_RATIOS: [f64; 5] = [0.3, 0.6, 2.3, 3.7, 5.0];

/// `10·log10(1/MSE)`; identical fields give `+∞`.
pub fn psnr(fit: &[f64], target: &[f64]) -> Result<f64> {
    if fit.len() != target.len() || fit.is_empty() {
        return Err(Error::param(
            "PSNR needs two fields of equal, nonzero length",
        ));
    }
    let mse = fit
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / fit.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpressivityOptions {
    pub repeats: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for ExpressivityOptions {
    fn default() -> Self {
        ExpressivityOptions {
            repeats: 1,
            seed: 0,
            fit: FitOptions {
                max_iterations: 20000,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressivityRow {
    pub label: String,
    pub params: usize,
    /// Worst PSNR across targets, one entry per repeat.
    pub worst_psnr: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Fits every spec to every target; per repeat keeps the worst PSNR.
pub fn expressivity_study(
    specs: &[ArchitectureSpec],
    targets: &[Vec<f64>],
    shape: (usize, usize),
    opts: &ExpressivityOptions,
) -> Result<Vec<ExpressivityRow>> {
    if targets.is_empty() || opts.repeats == 0 {
        return Err(Error::param(
            "expressivity needs targets and at least one repeat",
        ));
    }
    let (nx, ny) = shape;
    specs
        .par_iter()
        .map(|spec| {
            let reparam = Reparam::new(spec, nx, ny, 0.5)?;
            let worst_psnr = (0..opts.repeats)
                .map(|r| {
                    let theta0 = reparam.init_params(opts.seed + r as u64).values;
                    targets.iter().try_fold(f64::INFINITY, |acc, t| {
                        let fit = fit_to_density(&reparam, &theta0, t, &opts.fit)?;
                        let rho = reparam.density(&fit.params)?;
                        Ok::<_, Error>(acc.min(psnr(&rho, t)?))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let n = worst_psnr.len() as f64;
            let mean = worst_psnr.iter().sum::<f64>() / n;
            let std = if worst_psnr.iter().all(|v| v.is_finite()) {
                (worst_psnr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
            } else {
                0.0
            };
            Ok(ExpressivityRow {
                label: spec.label(),
                params: reparam.param_count(),
                worst_psnr,
                mean,
                std,
            })
        })
        .collect()
}

/// Architectures of the 64×32 sweep: MLP and SIREN widths, and CNN
/// `(input size, channels, filters)` for the over-parameterized budgets.
pub fn reference_architectures(omega0: f64) -> Vec<ArchitectureSpec> {
    let widths = [11, 15, 20, 33, 42, 50];
    let cnn = [(1, 1, 2), (16, 12, 16), (32, 12, 32), (64, 16, 32)];
    let mut out = Vec::new();
    for w in widths {
        out.push(ArchitectureSpec::mlp(w));
    }
    for w in widths {
        out.push(ArchitectureSpec::siren(w, omega0));
    }
    for (n, c, f) in cnn {
        out.push(ArchitectureSpec::cnn(CnnConfig::new(n, c, f)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = vec![0.0; 4];
        let b = vec![1e-3; 4];
        assert!((psnr(&a, &b).unwrap() - 60.0).abs() < 1e-9);
        let c = vec![0.5; 4];
        assert!((psnr(&a, &c).unwrap() - 6.020599913279624).abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&b, &c).unwrap(), psnr(&c, &b).unwrap());
    }
}
