//! One-dimensional objective slices between two decision-space points
//! obtained by fitting the reparameterization to reference densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{DesignMap, DesignProblem, ProjectionOrder};
use crate::reparam::{fit_to_density, FitOptions, Reparam};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSample {
    pub alpha: f64,
    pub objective: f64,
    /// Normalized volume constraint `V/V0 − 1`.
    pub constraint: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeOptions {
    pub n_alpha: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Fits worse than this (MSE) attach a warning to the result.
    pub mse_warning: f64,
    /// Constraint values above this count as violations.
    pub feasibility_tol: f64,
    pub order: ProjectionOrder,
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        LandscapeOptions {
            n_alpha: 101,
            seed: 0,
            fit: FitOptions::default(),
            mse_warning: 1e-2,
            feasibility_tol: 1e-3,
            order: ProjectionOrder::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeResult {
    pub samples: Vec<LandscapeSample>,
    pub fit_mse: [f64; 2],
    pub endpoints: [Vec<f64>; 2],
    pub warning: Option<String>,
}

impl LandscapeResult {
    pub fn objectives(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.objective).collect()
    }

    pub fn violations(&self) -> usize {
        self.samples.iter().filter(|s| s.violation).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,objective,constraint,violation\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{}\n",
                s.alpha, s.objective, s.constraint, s.violation as u8
            ));
        }
        out
    }
}

/// Slices `F∘h` along `θ̂₁ + α(θ̂₂ − θ̂₁)`, where `θ̂_k` fits `reference_k`
/// (densities at the reparameterization output, before filtering).
pub fn landscape_1d(
    problem: &DesignProblem,
    reparam: &Reparam,
    reference_1: &[f64],
    reference_2: &[f64],
    opts: &LandscapeOptions,
) -> Result<LandscapeResult> {
    if opts.n_alpha < 2 {
        return Err(Error::param(
            "a landscape slice needs at least two alpha values",
        ));
    }
    let theta0 = reparam.init_params(opts.seed).values;
    let fit1 = fit_to_density(reparam, &theta0, reference_1, &opts.fit)?;
    let fit2 = fit_to_density(reparam, &theta0, reference_2, &opts.fit)?;
    let map = DesignMap::new(problem, reparam, opts.order)?;
    let (t1, t2) = (&fit1.params, &fit2.params);
    let samples = (0..opts.n_alpha)
        .map(|k| {
            let alpha = k as f64 / (opts.n_alpha - 1) as f64;
            let theta: Vec<f64> = t1
                .iter()
                .zip(t2)
                .map(|(a, b)| a + alpha * (b - a))
                .collect();
            let (objective, constraint) = map.values(&theta)?;
            Ok(LandscapeSample {
                alpha,
                objective,
                constraint,
                violation: constraint > opts.feasibility_tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = fit1.mse.max(fit2.mse);
    let warning = (worst > opts.mse_warning).then(|| {
        format!(
            "reference fit MSE {worst:.3e} exceeds {:.1e}",
            opts.mse_warning
        )
    });
    Ok(LandscapeResult {
        samples,
        fit_mse: [fit1.mse, fit2.mse],
        endpoints: [fit1.params, fit2.params],
        warning,
    })
}

/// Interior strict local maxima whose prominence exceeds
/// `noise_fraction` of the slice's value range. Plateaus count once.
pub fn interior_local_maxima(values: &[f64], noise_fraction: f64) -> Vec<usize> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let floor = noise_fraction * (hi - lo);
    let mut peaks = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let v = values[i];
        if j < n - 1 && values[i - 1] < v && values[j + 1] < v {
            let left = values[..i]
                .iter()
                .rev()
                .take_while(|&&x| x <= v)
                .fold(v, |m, &x| m.min(x));
            let right = values[j + 1..]
                .iter()
                .take_while(|&&x| x <= v)
                .fold(v, |m, &x| m.min(x));
            if v - left.max(right) > floor {
                peaks.push(i);
            }
        }
        i = j + 1;
    }
    peaks
}
