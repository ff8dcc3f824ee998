//! Element matrices for unit-square bilinear quadrilaterals.
//!
//! Local node order is lower-left, lower-right, upper-right, upper-left
//! (counter-clockwise with y pointing up). Elastic elements carry two DOFs
//! per node in `(x, y)` order.

use crate::error::{Error, Result};

/// Row-major dense square matrix of fixed size.
pub type ElementMatrix<const N: usize> = [[f64; N]; N];

/// Unit-modulus plane-stress stiffness of a unit bilinear quad.
pub fn element_stiffness_elastic(poisson: f64) -> Result<ElementMatrix<8>> {
    if !(0.0..0.5).contains(&poisson) {
        return Err(Error::param(format!(
            "Poisson ratio must lie in [0, 0.5), got {poisson}"
        )));
    }
    let nu = poisson;
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    // index pattern of the closed-form matrix; entry (i, j) = k[PATTERN[i][j]]
    const PATTERN: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = 1.0 / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for (i, row) in ke.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = scale * k[PATTERN[i][j]];
        }
    }
    Ok(ke)
}

/// Unit-conductivity heat conduction matrix of a unit bilinear quad.
pub fn element_conductivity() -> ElementMatrix<4> {
    let a = 2.0 / 3.0;
    let b = -1.0 / 6.0;
    let c = -1.0 / 3.0;
    [[a, b, c, b], [b, a, b, c], [c, b, a, b], [b, c, b, a]]
}
