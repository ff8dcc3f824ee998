//! Landscape slices, trajectory diagnostics, expressivity and performance
//! profiles.

mod expressivity;
mod landscape;
mod profile;

pub use expressivity::{
    expressivity_study, psnr, reference_architectures, ExpressivityOptions, ExpressivityRow,
    EXPRESSIVITY_RATIOS,
};
pub use landscape::{
    interior_local_maxima, landscape_1d, LandscapeOptions, LandscapeResult, LandscapeSample,
};
pub use profile::{performance_profile, profile_to_csv, MetricKind, MetricTable};

use crate::optim::Trajectory;

/// `(grad_norm, angle)` per record. Angles are `None` on the first record
/// and wherever a gradient vanishes.
pub fn trajectory_metrics(traj: &Trajectory) -> Vec<(f64, Option<f64>)> {
    traj.records
        .iter()
        .map(|r| (r.grad_norm, r.grad_angle))
        .collect()
}

/// First index whose value is within `tol_fraction` (relative) of the
/// smallest value in `history`.
pub fn convergence_iteration(history: &[f64], tol_fraction: f64) -> Option<usize> {
    let best = history.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let limit = best + tol_fraction * best.abs();
    history.iter().position(|&v| v <= limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::gradient_angle;

    #[test]
    fn convergence_examples() {
        assert_eq!(convergence_iteration(&[3.0, 3.0, 3.0], 0.01), Some(0));
        assert_eq!(
            convergence_iteration(&[10.0, 5.0, 4.0, 4.001, 4.0], 0.01),
            Some(2)
        );
        assert_eq!(convergence_iteration(&[5.0, 4.0, 3.0, 2.0], 0.0), Some(3));
        assert_eq!(convergence_iteration(&[], 0.01), None);
    }

    #[test]
    fn angles() {
        let a = [1.0, 2.0, -0.5];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(gradient_angle(&a, &a), Some(0.0));
        assert!((gradient_angle(&a, &neg).unwrap() - std::f64::consts::PI).abs() < 1e-12);
        let o = gradient_angle(&[1.0, 0.0], &[0.0, 3.0]).unwrap();
        assert!((o - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(gradient_angle(&[0.0, 0.0], &[1.0, 0.0]), None);
    }
}
