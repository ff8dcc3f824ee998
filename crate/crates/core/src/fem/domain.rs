use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which physical problem a grid carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicsKind {
    /// Plane-stress elasticity, objective `Fᵀ U`.
    Compliance,
    /// Steady heat conduction, objective `Fᵀ T`.
    Thermal,
    /// Plane-stress compliant mechanism, objective `Pᵀ U`.
    Mechanism,
}

impl PhysicsKind {
    pub fn dofs_per_node(self) -> usize {
        match self {
            PhysicsKind::Thermal => 1,
            PhysicsKind::Compliance | PhysicsKind::Mechanism => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhysicsKind::Compliance => "compliance",
            PhysicsKind::Thermal => "thermal",
            PhysicsKind::Mechanism => "mechanism",
        }
    }
}

/// Material model for one problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub kind: PhysicsKind,
    /// Young's modulus or conductivity of solid material.
    pub modulus_solid: f64,
    /// Young's modulus or conductivity of void.
    pub modulus_void: f64,
    /// Poisson ratio; ignored for thermal problems.
    pub poisson: f64,
}

impl Physics {
    pub fn elastic(kind: PhysicsKind, modulus_solid: f64, modulus_void: f64, poisson: f64) -> Self {
        Physics {
            kind,
            modulus_solid,
            modulus_void,
            poisson,
        }
    }

    pub fn thermal(conductivity_solid: f64, conductivity_void: f64) -> Self {
        Physics {
            kind: PhysicsKind::Thermal,
            modulus_solid: conductivity_solid,
            modulus_void: conductivity_void,
            poisson: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.modulus_solid > self.modulus_void && self.modulus_void > 0.0) {
            return Err(Error::param(format!(
                "moduli must satisfy solid > void > 0 (got {} and {})",
                self.modulus_solid, self.modulus_void
            )));
        }
        if !(0.0..0.5).contains(&self.poisson) {
            return Err(Error::param(format!(
                "Poisson ratio must lie in [0, 0.5), got {}",
                self.poisson
            )));
        }
        Ok(())
    }

    /// Modified SIMP interpolation `E_void + rho^p (E_solid - E_void)`.
    pub fn interpolate(&self, rho: f64, penalty: f64) -> f64 {
        self.modulus_void + rho.powf(penalty) * (self.modulus_solid - self.modulus_void)
    }

    /// Derivative of [`Physics::interpolate`] with respect to `rho`.
    pub fn interpolate_derivative(&self, rho: f64, penalty: f64) -> f64 {
        penalty * rho.powf(penalty - 1.0) * (self.modulus_solid - self.modulus_void)
    }
}

/// Lumped spring attached to one degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub dof: usize,
    pub stiffness: f64,
}

/// A structured `nx × ny` mesh of unit square elements with its boundary
/// conditions.
///
/// Nodes are numbered column by column from the top-left corner:
/// node `(ix, iy)` has id `ix · (ny + 1) + iy`, with `iy = 0` on the top edge.
/// Elements are numbered row-major, `e = ey · nx + ex`, also from the top.
/// Elastic DOFs of node `n` are `2n` (x, rightwards) and `2n + 1` (y, upwards).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub nx: usize,
    pub ny: usize,
    pub element_size: f64,
    pub dofs_per_node: usize,
    pub fixed_dofs: Vec<usize>,
    pub load: Vec<f64>,
    pub output_vector: Vec<f64>,
    pub passive_solid: Vec<usize>,
    pub springs: Vec<Spring>,
}

impl GridDomain {
    /// An unconstrained, unloaded grid.
    pub fn new(nx: usize, ny: usize, dofs_per_node: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param(format!(
                "mesh must be at least 1x1, got {nx}x{ny}"
            )));
        }
        if dofs_per_node != 1 && dofs_per_node != 2 {
            return Err(Error::param("dofs_per_node must be 1 or 2"));
        }
        let ndof = (nx + 1) * (ny + 1) * dofs_per_node;
        Ok(GridDomain {
            nx,
            ny,
            element_size: 1.0,
            dofs_per_node,
            fixed_dofs: Vec::new(),
            load: vec![0.0; ndof],
            output_vector: vec![0.0; ndof],
            passive_solid: Vec::new(),
            springs: Vec::new(),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_dofs(&self) -> usize {
        self.num_nodes() * self.dofs_per_node
    }

    pub fn node(&self, ix: usize, iy: usize) -> usize {
        ix * (self.ny + 1) + iy
    }

    /// DOF `component` (0 = x, 1 = y) of node `(ix, iy)`.
    pub fn dof(&self, ix: usize, iy: usize, component: usize) -> usize {
        self.node(ix, iy) * self.dofs_per_node + component
    }

    pub fn element(&self, ex: usize, ey: usize) -> usize {
        ey * self.nx + ex
    }

    /// Node ids of element `e` in local order LL, LR, UR, UL.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        [
            self.node(ex, ey + 1),
            self.node(ex + 1, ey + 1),
            self.node(ex + 1, ey),
            self.node(ex, ey),
        ]
    }

    /// Global DOFs of element `e` in local element-matrix order.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let nodes = self.element_nodes(e);
        match self.dofs_per_node {
            1 => nodes.to_vec(),
            _ => nodes.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect(),
        }
    }

    /// Sorts and deduplicates the fixed DOF list.
    pub fn fix(&mut self, dofs: impl IntoIterator<Item = usize>) {
        self.fixed_dofs.extend(dofs);
        self.fixed_dofs.sort_unstable();
        self.fixed_dofs.dedup();
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::param("mesh must be at least 1x1"));
        }
        let ndof = self.num_dofs();
        if self.fixed_dofs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("fixed_dofs must be strictly increasing"));
        }
        if self.fixed_dofs.last().is_some_and(|&d| d >= ndof) {
            return Err(Error::param("fixed DOF index out of range"));
        }
        if self.load.len() != ndof || self.output_vector.len() != ndof {
            return Err(Error::param(format!(
                "load and output vectors must have {ndof} entries"
            )));
        }
        if self.passive_solid.iter().any(|&e| e >= self.num_elements()) {
            return Err(Error::param("passive element index out of range"));
        }
        for s in &self.springs {
            if s.dof >= ndof || !(s.stiffness > 0.0) {
                return Err(Error::param(format!(
                    "spring at DOF {} must have positive stiffness and valid DOF",
                    s.dof
                )));
            }
        }
        Ok(())
    }
}
