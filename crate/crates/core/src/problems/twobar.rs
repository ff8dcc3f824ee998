//! The two-bar truss with stress constraints, and the three-weight sine
//! network that reparameterizes its bar areas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LENGTH_1: f64 = 0.6;
pub const LENGTH_2: f64 = 0.4;
pub const LOAD: f64 = 1.0;
pub const STRESS_LIMIT: f64 = 1.0;
/// Bar areas are boxed to `[0, AREA_MAX]`.
pub const AREA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBarState {
    pub a1: f64,
    pub a2: f64,
}

/// Mass, scaled stress constraints and their gradients at one design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBarEval {
    pub mass: f64,
    pub stress: [f64; 2],
    /// `ḡ_i = (A_i / 2) (|σ_i| / σ_max − 1)`; feasible when `<= 0`.
    pub gbar: [f64; 2],
    pub mass_grad: [f64; 2],
    /// `gbar_grad[i][j] = ∂ḡ_i / ∂A_j`.
    pub gbar_grad: [[f64; 2]; 2],
}

impl TwoBarEval {
    pub fn max_violation(&self) -> f64 {
        self.gbar[0].max(self.gbar[1]).max(0.0)
    }
}

pub fn twobar_eval(state: TwoBarState) -> Result<TwoBarEval> {
    let TwoBarState { a1, a2 } = state;
    let denom = a1 * LENGTH_2 + a2 * LENGTH_1;
    if !(denom > 0.0) {
        return Err(Error::domain(format!(
            "two-bar stresses undefined at A = ({a1}, {a2})"
        )));
    }
    let s1 = LOAD * LENGTH_2 / denom;
    let s2 = -LOAD * LENGTH_1 / denom;
    let g1 = s1.abs() / STRESS_LIMIT - 1.0;
    let g2 = s2.abs() / STRESS_LIMIT - 1.0;
    // d|σ_i| / dA_j
    let d2 = denom * denom;
    let ds1 = [
        -LOAD * LENGTH_2 * LENGTH_2 / d2,
        -LOAD * LENGTH_2 * LENGTH_1 / d2,
    ];
    let ds2 = [
        -LOAD * LENGTH_1 * LENGTH_2 / d2,
        -LOAD * LENGTH_1 * LENGTH_1 / d2,
    ];
    let gbar_grad = [
        [
            0.5 * g1 + 0.5 * a1 * ds1[0] / STRESS_LIMIT,
            0.5 * a1 * ds1[1] / STRESS_LIMIT,
        ],
        [
            0.5 * a2 * ds2[0] / STRESS_LIMIT,
            0.5 * g2 + 0.5 * a2 * ds2[1] / STRESS_LIMIT,
        ],
    ];
    Ok(TwoBarEval {
        mass: LENGTH_1 * a1 + 2.0 * LENGTH_2 * a2,
        stress: [s1, s2],
        gbar: [0.5 * a1 * g1, 0.5 * a2 * g2],
        mass_grad: [LENGTH_1, 2.0 * LENGTH_2],
        gbar_grad,
    })
}

/// Areas produced by the sine micro-network and their Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoBarNetOutput {
    pub areas: [f64; 2],
    /// `jacobian[i][k] = ∂A_i / ∂θ_k`.
    pub jacobian: [[f64; 3]; 2],
}

/// `A_i = sin(θ_{i+1} · sin(ω0 θ_1 z_1)) + 1`.
pub fn twobar_siren_forward(theta: [f64; 3], omega0: f64, z1: f64) -> TwoBarNetOutput {
    let phase = omega0 * theta[0] * z1;
    let hidden = phase.sin();
    let dhidden = phase.cos() * omega0 * z1;
    let mut areas = [0.0; 2];
    let mut jacobian = [[0.0; 3]; 2];
    for i in 0..2 {
        let w = theta[i + 1];
        let arg = w * hidden;
        areas[i] = arg.sin() + 1.0;
        let c = arg.cos();
        jacobian[i][0] = c * w * dhidden;
        jacobian[i][i + 1] = c * hidden;
    }
    TwoBarNetOutput { areas, jacobian }
}
