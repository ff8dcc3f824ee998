use neuralto::reparam::{ArchitectureSpec, CnnConfig, OutputBounding, Reparam};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn specs() -> Vec<ArchitectureSpec> {
    vec![
        ArchitectureSpec::direct(),
        ArchitectureSpec::mlp(6),
        ArchitectureSpec::siren(6, 5.0),
        ArchitectureSpec::cnn(CnnConfig::new(2, 2, 3)),
        ArchitectureSpec::mlp(5).with_bounding(OutputBounding::ShiftedSigmoid),
        ArchitectureSpec::cnn(CnnConfig::default()).with_bounding(OutputBounding::ShiftedSigmoid),
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn vjp_matches_central_differences() {
    let (nx, ny) = (64, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in specs() {
        let r = Reparam::new(&spec, nx, ny, 0.4).unwrap();
        let mut worst: f64 = 0.0;
        for trial in 0..20 {
            let mut theta = r.init_params(trial).values;
            if r.is_direct() {
                theta
                    .iter_mut()
                    .for_each(|t| *t = rng.random_range(0.05..0.95));
            } else {
                theta
                    .iter_mut()
                    .for_each(|t| *t += rng.random_range(-0.05..0.05));
            }
            let w: Vec<f64> = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dtheta: Vec<f64> = (0..theta.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let g = r.vjp(&theta, &w).unwrap();
            let shifted = |s: f64| {
                let t: Vec<f64> = theta.iter().zip(&dtheta).map(|(a, d)| a + s * d).collect();
                dot(&r.density(&t).unwrap(), &w)
            };
            // Leaky-ReLU is piecewise linear: shrink the step while the two
            // one-sided slopes disagree, which signals a crossed kink.
            let f0 = shifted(0.0);
            let mut h = 1e-5;
            let mut fd;
            loop {
                let (fp, fm) = (shifted(h), shifted(-h));
                fd = (fp - fm) / (2.0 * h);
                let (right, left) = ((fp - f0) / h, (f0 - fm) / h);
                if (right - left).abs() <= 1e-5 * fd.abs().max(1e-3) || h < 1e-9 {
                    break;
                }
                h /= 4.0;
            }
            let an = dot(&g, &dtheta);
            let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(
            worst < 1e-4,
            "{}: worst relative error {worst:e}",
            spec.label()
        );
    }
}

#[test]
fn zero_cotangent_gives_zero_gradient() {
    for spec in specs() {
        let r = Reparam::new(&spec, 64, 32, 0.4).unwrap();
        let theta = r.init_params(3).values;
        let g = r.vjp(&theta, &vec![0.0; 64 * 32]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0), "{}", spec.label());
    }
}

#[test]
fn forward_and_init_are_deterministic() {
    for spec in specs() {
        let r = Reparam::new(&spec, 64, 32, 0.4).unwrap();
        let a = r.init_params(5);
        let b = r.init_params(5);
        assert_eq!(a.values, b.values);
        assert_eq!(a.len(), r.param_count());
        assert_eq!(r.density(&a.values).unwrap(), r.density(&b.values).unwrap());
        if !r.is_direct() {
            assert_ne!(a.values, r.init_params(6).values);
            let rho = r.density(&a.values).unwrap();
            assert!(rho.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }
}
