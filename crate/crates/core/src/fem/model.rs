use serde::{Deserialize, Serialize};

use super::domain::{GridDomain, Physics, PhysicsKind};
use super::element::{element_conductivity, element_stiffness_elastic};
use super::solver::{reverse_cuthill_mckee, SkylineFactor, SkylinePattern};
use crate::error::{Error, Result};

/// Densities may stray outside `[0, 1]` by this much before being rejected.
pub const DENSITY_TOLERANCE: f64 = 1e-12;

const PIVOT_TOLERANCE: f64 = 1e-14;

/// Objective value and its sensitivity with respect to the physical density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad_wrt_density: Vec<f64>,
    /// Nodal solution (displacements or temperatures), global numbering.
    pub state: Vec<f64>,
}

/// A grid problem prepared for repeated solves: element matrices, the
/// reduced-system ordering and its skyline profile are computed once.
#[derive(Debug, Clone)]
pub struct FeModel {
    domain: GridDomain,
    physics: Physics,
    /// Unit-modulus element matrix, row-major `nloc × nloc`.
    ke: Vec<f64>,
    nloc: usize,
    /// Global DOFs of every element, stride `nloc`.
    edofs: Vec<usize>,
    /// Permuted reduced index of each global DOF (`None` when fixed).
    reduced: Vec<Option<usize>>,
    pattern: SkylinePattern,
    /// Per element, `(storage slot, index into ke)` for the lower triangle.
    scatter: Vec<Vec<(usize, usize)>>,
    spring_slots: Vec<(usize, f64)>,
    passive: Vec<bool>,
}

impl FeModel {
    pub fn new(domain: &GridDomain, physics: Physics) -> Result<Self> {
        domain.validate()?;
        physics.validate()?;
        if domain.dofs_per_node != physics.kind.dofs_per_node() {
            return Err(Error::param(format!(
                "{} physics needs {} DOFs per node, domain has {}",
                physics.kind.name(),
                physics.kind.dofs_per_node(),
                domain.dofs_per_node
            )));
        }
        let (ke, nloc) = match physics.kind {
            PhysicsKind::Thermal => (element_conductivity().concat(), 4),
            _ => (element_stiffness_elastic(physics.poisson)?.concat(), 8),
        };
        let ne = domain.num_elements();
        let ndof = domain.num_dofs();
        let edofs: Vec<usize> = (0..ne).flat_map(|e| domain.element_dofs(e)).collect();

        let mut is_fixed = vec![false; ndof];
        for &d in &domain.fixed_dofs {
            is_fixed[d] = true;
        }
        let mut free_index = vec![None; ndof];
        let mut nfree = 0;
        for d in 0..ndof {
            if !is_fixed[d] {
                free_index[d] = Some(nfree);
                nfree += 1;
            }
        }

        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nfree];
        for dofs in edofs.chunks(nloc) {
            for &a in dofs {
                let Some(ra) = free_index[a] else { continue };
                for &b in dofs {
                    if let Some(rb) = free_index[b] {
                        if ra != rb {
                            adjacency[ra].push(rb);
                        }
                    }
                }
            }
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut inverse = vec![0; nfree];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let permuted: Vec<Vec<usize>> = perm
            .iter()
            .map(|&old| adjacency[old].iter().map(|&o| inverse[o]).collect())
            .collect();
        let pattern = SkylinePattern::from_adjacency(&permuted);
        let reduced: Vec<Option<usize>> =
            free_index.iter().map(|r| r.map(|r| inverse[r])).collect();

        let scatter = edofs
            .chunks(nloc)
            .map(|dofs| {
                let mut entries = Vec::with_capacity(nloc * (nloc + 1) / 2);
                for a in 0..nloc {
                    for b in 0..=a {
                        if let (Some(pa), Some(pb)) = (reduced[dofs[a]], reduced[dofs[b]]) {
                            let slot = if pa >= pb {
                                pattern.offset(pa, pb)
                            } else {
                                pattern.offset(pb, pa)
                            };
                            entries.push((slot, a * nloc + b));
                        }
                    }
                }
                entries
            })
            .collect();
        let spring_slots = domain
            .springs
            .iter()
            .filter_map(|s| reduced[s.dof].map(|r| (pattern.offset(r, r), s.stiffness)))
            .collect();
        let mut passive = vec![false; ne];
        for &e in &domain.passive_solid {
            passive[e] = true;
        }

        Ok(FeModel {
            domain: domain.clone(),
            physics,
            ke,
            nloc,
            edofs,
            reduced,
            pattern,
            scatter,
            spring_slots,
            passive,
        })
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn num_elements(&self) -> usize {
        self.domain.num_elements()
    }

    pub fn is_passive(&self, e: usize) -> bool {
        self.passive[e]
    }

    /// Unit-modulus element matrix.
    pub fn element_matrix(&self) -> &[f64] {
        &self.ke
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.edofs[e * self.nloc..(e + 1) * self.nloc]
    }

    fn check_modulus(&self, modulus: &[f64]) -> Result<()> {
        if modulus.len() != self.num_elements() {
            return Err(Error::param(format!(
                "modulus field has {} entries, mesh has {} elements",
                modulus.len(),
                self.num_elements()
            )));
        }
        if modulus.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::param("element moduli must be finite and positive"));
        }
        Ok(())
    }

    fn factor(&self, modulus: &[f64]) -> Result<SkylineFactor<'_>> {
        self.check_modulus(modulus)?;
        let mut values = vec![0.0; self.pattern.nnz()];
        for (entries, &m) in self.scatter.iter().zip(modulus) {
            for &(slot, k) in entries {
                values[slot] += m * self.ke[k];
            }
        }
        for &(slot, k) in &self.spring_slots {
            values[slot] += k;
        }
        SkylineFactor::factor(&self.pattern, values, PIVOT_TOLERANCE).map_err(|z| {
            Error::SingularSystem {
                physics: self.physics.kind.name().to_string(),
                nx: self.domain.nx,
                ny: self.domain.ny,
                equation: z.equation,
                pivot: z.pivot,
            }
        })
    }

    /// Solves `K(modulus) x = rhs` for each right-hand side; fixed DOFs are zero.
    pub fn solve_many(&self, modulus: &[f64], rhs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let factor = self.factor(modulus)?;
        let ndof = self.domain.num_dofs();
        rhs.iter()
            .map(|b| {
                if b.len() != ndof {
                    return Err(Error::param("right-hand side has wrong length"));
                }
                let mut x = vec![0.0; self.pattern.dim()];
                for (d, r) in self.reduced.iter().enumerate() {
                    if let Some(r) = r {
                        x[*r] = b[d];
                    }
                }
                factor.solve_in_place(&mut x);
                Ok(self
                    .reduced
                    .iter()
                    .map(|r| r.map_or(0.0, |r| x[r]))
                    .collect())
            })
            .collect()
    }

    /// Assembles `K` from per-element moduli and solves `K U = F`.
    pub fn assemble_and_solve(&self, modulus: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .solve_many(modulus, &[&self.domain.load])?
            .pop()
            .expect("one solution"))
    }

    /// Global product `K(modulus) u`, springs included.
    pub fn apply_stiffness(&self, modulus: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.num_dofs()];
        let n = self.nloc;
        for (e, &m) in modulus.iter().enumerate() {
            let dofs = self.element_dofs(e);
            for a in 0..n {
                let mut acc = 0.0;
                for b in 0..n {
                    acc += self.ke[a * n + b] * u[dofs[b]];
                }
                out[dofs[a]] += m * acc;
            }
        }
        for s in &self.domain.springs {
            out[s.dof] += s.stiffness * u[s.dof];
        }
        out
    }

    /// Relative residual `‖K U − F‖∞ / ‖F‖∞` over the free DOFs.
    pub fn relative_residual(&self, modulus: &[f64], u: &[f64]) -> f64 {
        let ku = self.apply_stiffness(modulus, u);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (d, r) in self.reduced.iter().enumerate() {
            if r.is_some() {
                num = num.max((ku[d] - self.domain.load[d]).abs());
                den = den.max(self.domain.load[d].abs());
            }
        }
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    /// `u_eᵀ k0 v_e` for element `e`.
    fn element_energy(&self, e: usize, u: &[f64], v: &[f64]) -> f64 {
        let dofs = self.element_dofs(e);
        let n = self.nloc;
        let mut acc = 0.0;
        for a in 0..n {
            let mut row = 0.0;
            for b in 0..n {
                row += self.ke[a * n + b] * v[dofs[b]];
            }
            acc += u[dofs[a]] * row;
        }
        acc
    }

    /// Checks and clamps a physical density field, forcing passive elements
    /// to solid.
    pub fn prepare_density(&self, rho_phys: &[f64]) -> Result<Vec<f64>> {
        if rho_phys.len() != self.num_elements() {
            return Err(Error::param(format!(
                "density field has {} entries, mesh has {} elements",
                rho_phys.len(),
                self.num_elements()
            )));
        }
        rho_phys
            .iter()
            .enumerate()
            .map(|(e, &r)| {
                if !(-DENSITY_TOLERANCE..=1.0 + DENSITY_TOLERANCE).contains(&r) {
                    return Err(Error::domain(format!(
                        "density {r} at element {e} outside [0, 1]"
                    )));
                }
                Ok(if self.passive[e] {
                    1.0
                } else {
                    r.clamp(0.0, 1.0)
                })
            })
            .collect()
    }

    /// Objective and adjoint sensitivity for a physical density field.
    pub fn evaluate(&self, rho_phys: &[f64], penalty: f64) -> Result<ObjectiveEval> {
        if !(penalty >= 1.0) {
            return Err(Error::param(format!(
                "SIMP penalty must be >= 1, got {penalty}"
            )));
        }
        let rho = self.prepare_density(rho_phys)?;
        let modulus: Vec<f64> = rho
            .iter()
            .map(|&r| self.physics.interpolate(r, penalty))
            .collect();
        let load = &self.domain.load;
        let (value, grad, state) = match self.physics.kind {
            PhysicsKind::Compliance | PhysicsKind::Thermal => {
                let u = self.assemble_and_solve(&modulus)?;
                let value = dot(load, &u);
                let grad = (0..rho.len())
                    .map(|e| {
                        if self.passive[e] {
                            0.0
                        } else {
                            -self.physics.interpolate_derivative(rho[e], penalty)
                                * self.element_energy(e, &u, &u)
                        }
                    })
                    .collect();
                (value, grad, u)
            }
            PhysicsKind::Mechanism => {
                let neg_p: Vec<f64> = self.domain.output_vector.iter().map(|p| -p).collect();
                let mut sols = self.solve_many(&modulus, &[load, &neg_p])?;
                let lambda = sols.pop().expect("adjoint");
                let u = sols.pop().expect("state");
                let value = dot(&self.domain.output_vector, &u);
                let grad = (0..rho.len())
                    .map(|e| {
                        if self.passive[e] {
                            0.0
                        } else {
                            self.physics.interpolate_derivative(rho[e], penalty)
                                * self.element_energy(e, &lambda, &u)
                        }
                    })
                    .collect();
                (value, grad, u)
            }
        };
        Ok(ObjectiveEval {
            value,
            grad_wrt_density: grad,
            state,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-shot [`FeModel::assemble_and_solve`].
pub fn assemble_and_solve(
    domain: &GridDomain,
    physics: Physics,
    modulus_field: &[f64],
) -> Result<Vec<f64>> {
    FeModel::new(domain, physics)?.assemble_and_solve(modulus_field)
}

/// One-shot [`FeModel::evaluate`].
pub fn evaluate_objective(
    domain: &GridDomain,
    physics: Physics,
    rho_phys: &[f64],
    penalty: f64,
) -> Result<ObjectiveEval> {
    FeModel::new(domain, physics)?.evaluate(rho_phys, penalty)
}
