//! MMA on the two-bar truss, directly on the areas or through the
//! three-weight sine network.

use serde::{Deserialize, Serialize};

use super::{mma_step, MmaConfig, MmaState};
use crate::error::{Error, Result};
use crate::problems::twobar::AREA_MAX;
use crate::problems::{twobar_eval, twobar_siren_forward, TwoBarState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwoBarParam {
    /// Decision variables are the areas, boxed to `[0, 2]`.
    Direct,
    /// `A_i = sin(θ_{i+1} sin(ω0 θ1 z1)) + 1`, weights boxed to `[−b, b]`.
    Siren { omega0: f64, z1: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBarRecord {
    pub iteration: usize,
    pub params: Vec<f64>,
    pub areas: [f64; 2],
    pub mass: f64,
    pub gbar: [f64; 2],
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBarRun {
    pub records: Vec<TwoBarRecord>,
}

impl TwoBarRun {
    pub fn last(&self) -> &TwoBarRecord {
        self.records.last().expect("at least the initial record")
    }

    /// First iteration whose areas lie within `tol` (max norm) of `target`
    /// with violation at most `feasibility_tol`.
    pub fn first_hit(&self, target: [f64; 2], tol: f64, feasibility_tol: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| {
                (r.areas[0] - target[0]).abs() <= tol
                    && (r.areas[1] - target[1]).abs() <= tol
                    && r.max_violation <= feasibility_tol
            })
            .map(|r| r.iteration)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,a1,a2,mass,gbar1,gbar2,max_violation,params\n");
        for r in &self.records {
            let params: Vec<String> = r.params.iter().map(|p| format!("{p:.17e}")).collect();
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                r.iteration,
                r.areas[0],
                r.areas[1],
                r.mass,
                r.gbar[0],
                r.gbar[1],
                r.max_violation,
                params.join(" ")
            ));
        }
        out
    }
}

struct Point {
    areas: [f64; 2],
    mass: f64,
    gbar: [f64; 2],
    dmass: Vec<f64>,
    dgbar: Vec<Vec<f64>>,
}

fn evaluate(param: &TwoBarParam, x: &[f64]) -> Result<Point> {
    let (areas, jac): ([f64; 2], Vec<Vec<f64>>) = match *param {
        TwoBarParam::Direct => ([x[0], x[1]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        TwoBarParam::Siren { omega0, z1, .. } => {
            let out = twobar_siren_forward([x[0], x[1], x[2]], omega0, z1);
            (out.areas, out.jacobian.iter().map(|r| r.to_vec()).collect())
        }
    };
    let e = twobar_eval(TwoBarState {
        a1: areas[0],
        a2: areas[1],
    })?;
    let n = x.len();
    let chain = |row: [f64; 2]| -> Vec<f64> {
        (0..n)
            .map(|j| row[0] * jac[0][j] + row[1] * jac[1][j])
            .collect()
    };
    Ok(Point {
        areas,
        mass: e.mass,
        gbar: e.gbar,
        dmass: chain(e.mass_grad),
        dgbar: e.gbar_grad.iter().map(|r| chain(*r)).collect(),
    })
}

/// `iterations` MMA steps from `x0`, recording every iterate.
pub fn run_twobar(
    param: &TwoBarParam,
    x0: &[f64],
    config: &MmaConfig,
    iterations: usize,
) -> Result<TwoBarRun> {
    config.validate()?;
    let (n, lo, hi) = match *param {
        TwoBarParam::Direct => (2, 0.0, AREA_MAX),
        TwoBarParam::Siren { omega0, bound, .. } => {
            if !(omega0.is_finite() && bound > 0.0) {
                return Err(Error::param(
                    "two-bar network needs finite omega0 and bound > 0",
                ));
            }
            (3, -bound, bound)
        }
    };
    if x0.len() != n {
        return Err(Error::param(format!(
            "expected {n} starting values, got {}",
            x0.len()
        )));
    }
    let mut state = MmaState::uniform(n, lo, hi)?;
    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(lo, hi)).collect();
    let mut records = Vec::with_capacity(iterations + 1);
    for it in 0..=iterations {
        let p = evaluate(param, &x).map_err(|e| e.at_iteration(it))?;
        records.push(TwoBarRecord {
            iteration: it,
            params: x.clone(),
            areas: p.areas,
            mass: p.mass,
            gbar: p.gbar,
            max_violation: p.gbar[0].max(p.gbar[1]).max(0.0),
        });
        if it == iterations {
            break;
        }
        x = mma_step(&mut state, &x, &p.dmass, &p.gbar, &p.dgbar, config)
            .map_err(|e| e.at_iteration(it))?;
    }
    Ok(TwoBarRun { records })
}
