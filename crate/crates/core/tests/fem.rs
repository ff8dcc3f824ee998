#![allow(clippy::needless_range_loop)]

use neuralto::fem::*;
use neuralto::problems::make_problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// Shape-function gradients of the unit bilinear quad at `(x, y)`.
fn grads(x: f64, y: f64) -> [(f64, f64); 4] {
    let mut g = [(0.0, 0.0); 4];
    for (a, &(xa, ya)) in CORNERS.iter().enumerate() {
        let sx = if xa == 0.0 { -1.0 } else { 1.0 };
        let sy = if ya == 0.0 { -1.0 } else { 1.0 };
        let fx = if xa == 0.0 { 1.0 - x } else { x };
        let fy = if ya == 0.0 { 1.0 - y } else { y };
        g[a] = (sx * fy, sy * fx);
    }
    g
}

fn gauss_points() -> Vec<(f64, f64)> {
    let r = 0.5 / 3f64.sqrt();
    let p = [0.5 - r, 0.5 + r];
    p.iter()
        .flat_map(|&x| p.iter().map(move |&y| (x, y)))
        .collect()
}

fn gauss_elastic(nu: f64) -> [[f64; 8]; 8] {
    let s = 1.0 / (1.0 - nu * nu);
    let d = [
        [s, s * nu, 0.0],
        [s * nu, s, 0.0],
        [0.0, 0.0, s * (1.0 - nu) / 2.0],
    ];
    let mut k = [[0.0; 8]; 8];
    for (x, y) in gauss_points() {
        let g = grads(x, y);
        let mut b = [[0.0; 8]; 3];
        for a in 0..4 {
            b[0][2 * a] = g[a].0;
            b[1][2 * a + 1] = g[a].1;
            b[2][2 * a] = g[a].1;
            b[2][2 * a + 1] = g[a].0;
        }
        for i in 0..8 {
            for j in 0..8 {
                let mut v = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        v += b[p][i] * d[p][q] * b[q][j];
                    }
                }
                k[i][j] += 0.25 * v;
            }
        }
    }
    k
}

fn gauss_conduction() -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for (x, y) in gauss_points() {
        let g = grads(x, y);
        for i in 0..4 {
            for j in 0..4 {
                k[i][j] += 0.25 * (g[i].0 * g[j].0 + g[i].1 * g[j].1);
            }
        }
    }
    k
}

/// Dense Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Global DOFs of element `(ex, ey)` in the local LL, LR, UR, UL order.
fn local_dofs(d: &GridDomain, ex: usize, ey: usize) -> Vec<usize> {
    let nodes = [(ex, ey + 1), (ex + 1, ey + 1), (ex + 1, ey), (ex, ey)];
    nodes
        .iter()
        .flat_map(|&(ix, iy)| (0..d.dofs_per_node).map(move |c| d.dof(ix, iy, c)))
        .collect()
}

/// Dense global assembly, reduction and solve, independent of the library.
fn brute_force(d: &GridDomain, ke: &[Vec<f64>], modulus: &[f64]) -> Vec<f64> {
    let n = d.num_dofs();
    let mut k = vec![vec![0.0; n]; n];
    for ey in 0..d.ny {
        for ex in 0..d.nx {
            let dofs = local_dofs(d, ex, ey);
            let m = modulus[ey * d.nx + ex];
            for (i, &gi) in dofs.iter().enumerate() {
                for (j, &gj) in dofs.iter().enumerate() {
                    k[gi][gj] += m * ke[i][j];
                }
            }
        }
    }
    for s in &d.springs {
        k[s.dof][s.dof] += s.stiffness;
    }
    let free: Vec<usize> = (0..n).filter(|i| !d.fixed_dofs.contains(i)).collect();
    let a = free
        .iter()
        .map(|&i| free.iter().map(|&j| k[i][j]).collect())
        .collect();
    let b = free.iter().map(|&i| d.load[i]).collect();
    let x = dense_solve(a, b);
    let mut u = vec![0.0; n];
    for (f, v) in free.iter().zip(x) {
        u[*f] = v;
    }
    u
}

#[test]
fn elastic_matrix_matches_quadrature() {
    for nu in [0.0, 0.2, 0.3, 0.45] {
        let k = element_stiffness_elastic(nu).unwrap();
        let g = gauss_elastic(nu);
        for i in 0..8 {
            for j in 0..8 {
                assert!((k[i][j] - g[i][j]).abs() < 1e-13, "nu {nu} entry ({i},{j})");
            }
        }
    }
    let k = element_stiffness_elastic(0.3).unwrap();
    assert!((k[0][0] - (0.5 - 0.05) / 0.91).abs() < 1e-15);
    assert!((k[0][0] - 0.494505).abs() < 1e-6);
}

#[test]
fn conduction_matrix_matches_quadrature() {
    let k = element_conductivity();
    let g = gauss_conduction();
    for i in 0..4 {
        for j in 0..4 {
            assert!((k[i][j] - g[i][j]).abs() < 1e-14);
        }
    }
}

#[test]
fn single_element_hand_solve() {
    let mut d = GridDomain::new(1, 1, 2).unwrap();
    d.fix([
        d.dof(0, 0, 0),
        d.dof(0, 0, 1),
        d.dof(0, 1, 0),
        d.dof(0, 1, 1),
    ]);
    let right_bottom = d.dof(1, 1, 0);
    d.load[right_bottom] = 1.0;
    d.output_vector = d.load.clone();
    let physics = Physics::elastic(PhysicsKind::Compliance, 1.0, 1e-9, 0.3);
    let u = assemble_and_solve(&d, physics, &[1.0]).unwrap();

    let ke: Vec<Vec<f64>> = gauss_elastic(0.3).iter().map(|r| r.to_vec()).collect();
    let expected = brute_force(&d, &ke, &[1.0]);
    for (a, b) in u.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!(u[right_bottom] > 0.0);
    for dof in &d.fixed_dofs {
        assert_eq!(u[*dof], 0.0);
    }
}

#[test]
fn doubling_modulus_halves_displacement() {
    let spec = make_problem("mbb", (8, 4), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m: Vec<f64> = (0..32).map(|_| rng.random_range(0.1..2.0)).collect();
    let m2: Vec<f64> = m.iter().map(|v| 2.0 * v).collect();
    let u = assemble_and_solve(&spec.domain, spec.physics, &m).unwrap();
    let u2 = assemble_and_solve(&spec.domain, spec.physics, &m2).unwrap();
    let scale = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (a, b) in u.iter().zip(&u2) {
        assert!((a - 2.0 * b).abs() <= 1e-12 * scale);
    }
}

#[test]
fn solution_matches_dense_assembly_and_residual() {
    for name in ["mbb", "michell", "mechanism", "thermal"] {
        let spec = make_problem(name, (8, 4), 0.4).unwrap();
        let d = &spec.domain;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m: Vec<f64> = (0..32).map(|_| rng.random_range(0.01..1.0)).collect();
        let model = FeModel::new(d, spec.physics).unwrap();
        let u = model.assemble_and_solve(&m).unwrap();
        assert!(model.relative_residual(&m, &u) <= 1e-8, "{name}");

        let ke: Vec<Vec<f64>> = if d.dofs_per_node == 2 {
            gauss_elastic(spec.physics.poisson)
                .iter()
                .map(|r| r.to_vec())
                .collect()
        } else {
            gauss_conduction().iter().map(|r| r.to_vec()).collect()
        };
        let expected = brute_force(d, &ke, &m);
        let scale = expected.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in u.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-9 * scale, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn thermal_two_by_two_is_symmetric() {
    let mut d = GridDomain::new(2, 2, 1).unwrap();
    // sink at the centre node, unit source everywhere else
    d.fix([d.dof(1, 1, 0)]);
    d.load = vec![1.0; d.num_dofs()];
    d.output_vector = d.load.clone();
    let physics = Physics::thermal(1.0, 1e-3);
    let t = assemble_and_solve(&d, physics, &[1.0; 4]).unwrap();
    let ke: Vec<Vec<f64>> = gauss_conduction().iter().map(|r| r.to_vec()).collect();
    let expected = brute_force(&d, &ke, &[1.0; 4]);
    for (a, b) in t.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    let at = |ix, iy| t[d.dof(ix, iy, 0)];
    let corners = [at(0, 0), at(2, 0), at(0, 2), at(2, 2)];
    let edges = [at(1, 0), at(0, 1), at(2, 1), at(1, 2)];
    for c in corners {
        assert!((c - corners[0]).abs() < 1e-12);
    }
    for e in edges {
        assert!((e - edges[0]).abs() < 1e-12);
    }
    assert!(corners[0] > edges[0] && edges[0] > 0.0);
}

#[test]
fn singular_system_is_reported() {
    let mut d = GridDomain::new(2, 1, 2).unwrap();
    let tip = d.dof(2, 0, 1);
    d.load[tip] = -1.0;
    d.output_vector = d.load.clone();
    let physics = Physics::elastic(PhysicsKind::Compliance, 1.0, 1e-9, 0.3);
    let err = assemble_and_solve(&d, physics, &[1.0, 1.0]).unwrap_err();
    assert!(
        matches!(err, neuralto::Error::SingularSystem { .. }),
        "{err}"
    );
}

#[test]
fn simp_modulus_at_half_density() {
    let p = Physics::elastic(PhysicsKind::Compliance, 10.0, 1e-9, 0.3);
    assert!((p.interpolate(0.5, 3.0) - (1e-9 + 0.125 * (10.0 - 1e-9))).abs() < 1e-15);
}

#[test]
fn solid_design_has_positive_compliance_and_nonpositive_gradient() {
    let spec = make_problem("mbb", (8, 4), 0.5).unwrap();
    let ev = evaluate_objective(&spec.domain, spec.physics, &[1.0; 32], 3.0).unwrap();
    assert!(ev.value > 0.0);
    assert!(ev.grad_wrt_density.iter().all(|&g| g <= 0.0));
}

#[test]
fn out_of_range_density_is_rejected() {
    let spec = make_problem("mbb", (8, 4), 0.5).unwrap();
    let mut rho = vec![0.5; 32];
    rho[3] = 1.0 + 1e-9;
    assert!(evaluate_objective(&spec.domain, spec.physics, &rho, 3.0).is_err());
    rho[3] = 1.0 + 1e-13;
    assert!(evaluate_objective(&spec.domain, spec.physics, &rho, 3.0).is_ok());
}

/// Central differences at step 1e−6 on every element of an 8×4 mesh. The
/// error is relative to the gradient's max-norm: at this step the difference
/// quotient carries ~1e−9 of solver round-off, more than 1e−4 of the
/// smallest entries.
fn check_gradient(name: &str, penalty: f64) {
    let spec = make_problem(name, (8, 4), 0.4).unwrap();
    let model = FeModel::new(&spec.domain, spec.physics).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rho: Vec<f64> = (0..32).map(|_| rng.random_range(0.2..0.8)).collect();
    let ev = model.evaluate(&rho, penalty).unwrap();
    let scale = ev
        .grad_wrt_density
        .iter()
        .fold(0.0f64, |a, g| a.max(g.abs()));
    let h = 1e-6;
    for e in 0..32 {
        let mut up = rho.clone();
        let mut dn = rho.clone();
        up[e] += h;
        dn[e] -= h;
        let fd = (model.evaluate(&up, penalty).unwrap().value
            - model.evaluate(&dn, penalty).unwrap().value)
            / (2.0 * h);
        let an = ev.grad_wrt_density[e];
        if model.is_passive(e) {
            assert_eq!(an, 0.0);
            continue;
        }
        let rel = (fd - an).abs() / scale;
        assert!(
            rel < 1e-4,
            "{name} element {e}: analytic {an}, fd {fd}, rel {rel:.2e}"
        );
    }
}

#[test]
fn compliance_gradient_matches_finite_differences() {
    check_gradient("mbb", 3.0);
    check_gradient("bridge", 3.0);
    check_gradient("michell", 1.0);
}

#[test]
fn thermal_gradient_matches_finite_differences() {
    check_gradient("thermal", 3.0);
}

#[test]
fn mechanism_gradient_matches_finite_differences() {
    check_gradient("mechanism", 3.0);
}

#[test]
fn passive_elements_are_solid_with_zero_gradient() {
    let spec = make_problem("bridge", (8, 4), 0.4).unwrap();
    assert!(!spec.domain.passive_solid.is_empty());
    let model = FeModel::new(&spec.domain, spec.physics).unwrap();
    let mut rho = vec![0.5; 32];
    let ev = model.evaluate(&rho, 3.0).unwrap();
    for &e in &spec.domain.passive_solid {
        assert_eq!(ev.grad_wrt_density[e], 0.0);
        rho[e] = 0.0;
    }
    // passive densities are overridden, so their input value is irrelevant
    assert_eq!(model.evaluate(&rho, 3.0).unwrap().value, ev.value);
}
