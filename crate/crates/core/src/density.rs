//! Transformations between design variables and physical densities: the
//! cone density filter, shifted-sigmoid volume projection and
//! black-and-white thresholding, each with its exact adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid of densities stored row-major (`ny` rows of `nx` values, top row
/// first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::param(format!(
                "density field of {nx}x{ny} needs {} values, got {}",
                nx * ny,
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && **v <= 1.0))
        {
            return Err(Error::domain(format!(
                "density {v} at element {i} outside [0, 1]"
            )));
        }
        Ok(DensityField { nx, ny, values })
    }

    pub fn uniform(nx: usize, ny: usize, value: f64) -> Self {
        DensityField {
            nx,
            ny,
            values: vec![value; nx * ny],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn get(&self, ex: usize, ey: usize) -> f64 {
        self.values[ey * self.nx + ex]
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Volume target of a problem; every element has the same volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeBudget {
    pub target: f64,
    pub element_volume: f64,
}

impl VolumeBudget {
    pub fn new(target: f64) -> Result<Self> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::param(format!(
                "volume fraction must lie in (0, 1], got {target}"
            )));
        }
        Ok(VolumeBudget {
            target,
            element_volume: 1.0,
        })
    }

    /// Volume fraction of a density vector.
    pub fn volume(&self, rho: &[f64]) -> f64 {
        mean(rho)
    }
}

/// Row-normalized cone filter `x̃ = H x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOperator {
    pub nx: usize,
    pub ny: usize,
    pub radius: f64,
    /// Per output element, `(input element, normalized weight)`.
    rows: Vec<Vec<(usize, f64)>>,
    /// Row sums of the raw cone weights.
    row_sums: Vec<f64>,
}

impl FilterOperator {
    pub fn identity(nx: usize, ny: usize) -> Self {
        FilterOperator {
            nx,
            ny,
            radius: 1.0,
            rows: (0..nx * ny).map(|i| vec![(i, 1.0)]).collect(),
            row_sums: vec![1.0; nx * ny],
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    pub fn is_identity(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1)
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.rows.len() {
            return Err(Error::param(format!(
                "filter expects {} values, got {n}",
                self.rows.len()
            )));
        }
        Ok(())
    }

    /// `H x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * x[j]).sum())
            .collect())
    }

    /// `Hᵀ w`.
    pub fn vjp(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check(w.len())?;
        let mut out = vec![0.0; w.len()];
        for (row, &wi) in self.rows.iter().zip(w) {
            for &(j, h) in row {
                out[j] += h * wi;
            }
        }
        Ok(out)
    }
}

/// Cone-weight filter with weights `max(0, rmin − distance)` between element
/// centres, normalized per row.
pub fn build_filter(nx: usize, ny: usize, rmin: f64) -> Result<FilterOperator> {
    if !(rmin > 0.0) {
        return Err(Error::param(format!(
            "filter radius must be positive, got {rmin}"
        )));
    }
    let reach = (rmin.ceil() as isize - 1).max(0);
    let mut rows = Vec::with_capacity(nx * ny);
    let mut row_sums = Vec::with_capacity(nx * ny);
    for ey in 0..ny as isize {
        for ex in 0..nx as isize {
            let mut row = Vec::new();
            for ny2 in (ey - reach).max(0)..=(ey + reach).min(ny as isize - 1) {
                for nx2 in (ex - reach).max(0)..=(ex + reach).min(nx as isize - 1) {
                    let d = (((ex - nx2).pow(2) + (ey - ny2).pow(2)) as f64).sqrt();
                    let w = rmin - d;
                    if w > 0.0 {
                        row.push((ny2 as usize * nx + nx2 as usize, w));
                    }
                }
            }
            let sum: f64 = row.iter().map(|(_, w)| w).sum();
            for (_, w) in &mut row {
                *w /= sum;
            }
            rows.push(row);
            row_sums.push(sum);
        }
    }
    Ok(FilterOperator {
        nx,
        ny,
        radius: rmin,
        rows,
        row_sums,
    })
}

/// `H x` as a free function.
pub fn apply_filter(filter: &FilterOperator, x: &DensityField) -> Result<DensityField> {
    if (x.nx, x.ny) != (filter.nx, filter.ny) {
        return Err(Error::param("filter and field shapes differ"));
    }
    Ok(DensityField {
        nx: x.nx,
        ny: x.ny,
        values: filter.apply(&x.values)?,
    })
}

/// `Hᵀ w` as a free function.
pub fn filter_vjp(filter: &FilterOperator, w: &[f64]) -> Result<Vec<f64>> {
    filter.vjp(w)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Elementwise sigmoid.
pub fn sigmoid_project(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|&x| sigmoid(x)).collect()
}

/// VJP of [`sigmoid_project`] given its output.
pub fn sigmoid_vjp(rho: &[f64], w: &[f64]) -> Vec<f64> {
    rho.iter().zip(w).map(|(r, w)| w * r * (1.0 - r)).collect()
}

/// Bisection stops once the bracket on the shift is narrower than this.
pub const SHIFT_TOLERANCE: f64 = 1e-12;

/// Output of [`shifted_sigmoid_project`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub rho: Vec<f64>,
    /// The offset `b` in `ρ = 1 / (1 + exp(−(x + b)))`.
    pub shift: f64,
}

/// Shifted sigmoid `ρ_i = σ(x_i + b)` with `b` found by bisection so that
/// the mean density equals `target`.
pub fn shifted_sigmoid_project(raw: &[f64], target: f64) -> Result<Projection> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param(format!(
            "shifted sigmoid needs a volume fraction in (0, 1), got {target}"
        )));
    }
    if raw.is_empty() {
        return Err(Error::param("cannot project an empty field"));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("raw network output is not finite"));
    }
    let (lo_raw, hi_raw) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let volume = |b: f64| raw.iter().map(|&x| sigmoid(x + b)).sum::<f64>() / raw.len() as f64;
    // at lo every element is at most `target`, at hi at least `target`
    let centre = logit(target);
    let mut lo = centre - hi_raw - 1.0;
    let mut hi = centre - lo_raw + 1.0;
    if volume(lo) > target || volume(hi) < target {
        return Err(Error::Bracket { target });
    }
    let mut iterations = 0;
    while hi - lo > SHIFT_TOLERANCE && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if volume(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let shift = 0.5 * (lo + hi);
    Ok(Projection {
        rho: raw.iter().map(|&x| sigmoid(x + shift)).collect(),
        shift,
    })
}

/// VJP of the shifted-sigmoid projection, including the implicit dependence
/// of the shift on every input.
pub fn shifted_sigmoid_vjp(rho: &[f64], w: &[f64]) -> Vec<f64> {
    let slope: Vec<f64> = rho.iter().map(|r| r * (1.0 - r)).collect();
    let total: f64 = slope.iter().sum();
    let weighted: f64 = slope.iter().zip(w).map(|(s, w)| s * w).sum();
    let correction = if total > 0.0 { weighted / total } else { 0.0 };
    slope
        .iter()
        .zip(w)
        .map(|(s, w)| s * (w - correction))
        .collect()
}

/// Density given to void elements by [`threshold`].
pub const THRESHOLD_VOID: f64 = 0.001;

/// Number of solid elements kept by [`threshold`]:
/// `round(N (V0 − 0.001) / (1 − 0.001))`, halves rounded up.
pub fn solid_count(n: usize, target: f64) -> usize {
    let raw = n as f64 * (target - THRESHOLD_VOID) / (1.0 - THRESHOLD_VOID);
    ((raw + 0.5).floor().max(0.0) as usize).min(n)
}

/// Black-and-white projection keeping the `N_p` densest elements solid.
/// Ties go to the lower element index.
pub fn threshold(rho: &DensityField, budget: VolumeBudget) -> DensityField {
    let n = rho.len();
    let keep = solid_count(n, budget.target);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rho.values[b].total_cmp(&rho.values[a]).then(a.cmp(&b)));
    let mut values = vec![THRESHOLD_VOID; n];
    for &i in &order[..keep] {
        values[i] = 1.0;
    }
    DensityField {
        nx: rho.nx,
        ny: rho.ny,
        values,
    }
}

/// `c_th · V_th / V0` for a thresholded design that slightly misses the
/// volume target.
pub fn rescale_thresholded_compliance(c_th: f64, v_th: f64, v0: f64) -> Result<f64> {
    if v0 == 0.0 || !v0.is_finite() {
        return Err(Error::param("target volume must be non-zero"));
    }
    Ok(c_th * v_th / v0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_radius_is_identity() {
        let f = build_filter(5, 4, 1.0).unwrap();
        assert!(f.is_identity());
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        assert_eq!(f.apply(&x).unwrap(), x);
        assert_eq!(f.vjp(&x).unwrap(), x);
    }

    #[test]
    fn uniform_field_is_fixed_point() {
        for r in [1.2, 1.5, 2.0, 3.7] {
            let f = build_filter(7, 5, r).unwrap();
            for v in f.apply(&vec![0.42; 35]).unwrap() {
                assert!((v - 0.42).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn filter_shape_mismatch() {
        let f = build_filter(3, 3, 1.5).unwrap();
        assert!(f.apply(&[0.0; 4]).is_err());
        assert!(build_filter(3, 3, 0.0).is_err());
    }

    #[test]
    fn projection_of_constant_is_uniform() {
        let p = shifted_sigmoid_project(&[1.7; 10], 0.3).unwrap();
        for r in p.rho {
            assert!((r - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_symmetric_pair() {
        let p = shifted_sigmoid_project(&[-10.0, 10.0], 0.5).unwrap();
        assert!(p.shift.abs() < 1e-9);
        assert!((p.rho[0] - sigmoid(-10.0)).abs() < 1e-9);
        assert!(p.rho[0] < 1e-4 && p.rho[1] > 1.0 - 1e-4);
    }

    #[test]
    fn projection_rejects_bad_target() {
        assert!(shifted_sigmoid_project(&[0.0], 1.0).is_err());
        assert!(shifted_sigmoid_project(&[0.0], 0.0).is_err());
        assert!(shifted_sigmoid_project(&[f64::NAN], 0.5).is_err());
    }

    #[test]
    fn solid_count_reference() {
        assert_eq!(solid_count(2048, 0.3), 613);
        assert_eq!(solid_count(2048, 1.0), 2048);
    }

    #[test]
    fn threshold_tie_break_prefers_low_index() {
        let rho = DensityField::uniform(64, 32, 0.3);
        let t = threshold(&rho, VolumeBudget::new(0.3).unwrap());
        assert!(t.values[..613].iter().all(|&v| v == 1.0));
        assert!(t.values[613..].iter().all(|&v| v == THRESHOLD_VOID));
    }

    #[test]
    fn rescale() {
        let c = rescale_thresholded_compliance(100.0, 0.31, 0.30).unwrap();
        assert!((c - 100.0 * 0.31 / 0.30).abs() < 1e-12);
        assert_eq!(
            rescale_thresholded_compliance(42.0, 0.3, 0.3).unwrap(),
            42.0
        );
        assert_eq!(rescale_thresholded_compliance(0.0, 0.3, 0.2).unwrap(), 0.0);
        assert!(rescale_thresholded_compliance(1.0, 0.3, 0.0).is_err());
    }
}
