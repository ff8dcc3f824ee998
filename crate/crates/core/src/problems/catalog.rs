//! Benchmark boundary-value problems on structured grids.
//!
//! The figures these cases come from are schematic, so load-patch widths,
//! support extents and the bridge's passive strip are fixed constants below,
//! quoted at the reference 64×32 resolution and scaled with the mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{GridDomain, Physics, PhysicsKind, Spring};

pub const CATALOG: [&str; 8] = [
    "mbb",
    "michell",
    "cantilever",
    "bridge",
    "tensile",
    "thermal",
    "mechanism",
    "twobar",
];

pub const YOUNG_SOLID: f64 = 10.0;
pub const YOUNG_VOID: f64 = 1e-9;
pub const POISSON: f64 = 0.3;
pub const CONDUCTIVITY_SOLID: f64 = 1.0;
pub const CONDUCTIVITY_VOID: f64 = 0.001;
pub const SPRING_IN: f64 = 1.0;
pub const SPRING_OUT: f64 = 0.001;
pub const DEFAULT_PENALTY: f64 = 3.0;

/// Element edges a distributed load spans at 64 elements across.
pub const LOAD_PATCH_EDGES: usize = 4;
/// Element edges a support spans at 64 elements across.
pub const SUPPORT_PATCH_EDGES: usize = 2;
/// Rows of passive solid along the bridge deck at 32 elements high.
pub const BRIDGE_PASSIVE_ROWS: usize = 2;
/// Filter radius in element widths at 64 elements across.
pub const FILTER_RADIUS_REF: f64 = 2.0;
const REFERENCE_NX: f64 = 64.0;
const REFERENCE_NY: f64 = 32.0;

/// One benchmark case: mesh, physics, boundary conditions and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub physics: Physics,
    pub volume_target: f64,
    pub penalty: f64,
    pub filter_radius: f64,
    pub domain: GridDomain,
}

impl ProblemSpec {
    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }
}

/// Default volume fraction for a catalog entry.
pub fn default_volume(name: &str) -> f64 {
    match name {
        "thermal" => 0.3,
        "mechanism" => 0.4,
        _ => 0.5,
    }
}

fn scaled(count: usize, n: usize, reference: f64) -> usize {
    ((count as f64 * n as f64 / reference).round() as usize).max(1)
}

/// Nodal weights of a unit load spread uniformly over `edges` element edges.
fn patch_weights(edges: usize) -> Vec<f64> {
    let mut w = vec![1.0 / edges as f64; edges + 1];
    w[0] *= 0.5;
    w[edges] *= 0.5;
    w
}

/// First node of a patch of `edges` edges centred on node `centre`, clamped
/// to `[0, n - edges]`.
fn centred(centre: usize, edges: usize, n: usize) -> usize {
    centre.saturating_sub(edges / 2).min(n - edges.min(n))
}

pub fn make_problem(name: &str, resolution: (usize, usize), v0: f64) -> Result<ProblemSpec> {
    let (nx, ny) = resolution;
    if nx == 0 || ny == 0 {
        return Err(Error::param(format!(
            "resolution must be positive, got {nx}x{ny}"
        )));
    }
    if !(v0 > 0.0 && v0 <= 1.0) {
        return Err(Error::param(format!(
            "volume fraction must lie in (0, 1], got {v0}"
        )));
    }
    let load_x = scaled(LOAD_PATCH_EDGES, nx, REFERENCE_NX).min(nx);
    let load_y = scaled(LOAD_PATCH_EDGES, ny, REFERENCE_NY).min(ny);
    let support = scaled(SUPPORT_PATCH_EDGES, nx, REFERENCE_NX).min(nx);
    let elastic = Physics::elastic(PhysicsKind::Compliance, YOUNG_SOLID, YOUNG_VOID, POISSON);

    let (physics, domain) = match name {
        "mbb" => {
            // half beam, symmetry on the left edge
            let mut d = GridDomain::new(nx, ny, 2)?;
            d.fix((0..=ny).map(|iy| d.dof(0, iy, 0)).collect::<Vec<_>>());
            d.fix(
                (nx - support..=nx)
                    .map(|ix| d.dof(ix, ny, 1))
                    .collect::<Vec<_>>(),
            );
            for (k, w) in patch_weights(load_x).into_iter().enumerate() {
                let dof = d.dof(k, 0, 1);
                d.load[dof] -= w;
            }
            (elastic, d)
        }
        "michell" => {
            let mut d = GridDomain::new(nx, ny, 2)?;
            for ix in (0..=support).chain(nx - support..=nx) {
                d.fix([d.dof(ix, ny, 0), d.dof(ix, ny, 1)]);
            }
            let start = centred(nx / 2, load_x, nx);
            for (k, w) in patch_weights(load_x).into_iter().enumerate() {
                let dof = d.dof(start + k, ny, 1);
                d.load[dof] -= w;
            }
            (elastic, d)
        }
        "cantilever" => {
            let mut d = GridDomain::new(nx, ny, 2)?;
            d.fix(
                (0..=ny)
                    .flat_map(|iy| [d.dof(0, iy, 0), d.dof(0, iy, 1)])
                    .collect::<Vec<_>>(),
            );
            let start = centred(ny / 2, load_y, ny);
            for (k, w) in patch_weights(load_y).into_iter().enumerate() {
                let dof = d.dof(nx, start + k, 1);
                d.load[dof] -= w;
            }
            (elastic, d)
        }
        "bridge" => {
            let mut d = GridDomain::new(nx, ny, 2)?;
            for ix in (0..=support).chain(nx - support..=nx) {
                d.fix([d.dof(ix, ny, 0), d.dof(ix, ny, 1)]);
            }
            for (ix, w) in patch_weights(nx).into_iter().enumerate() {
                let dof = d.dof(ix, 0, 1);
                d.load[dof] -= w;
            }
            let rows = scaled(BRIDGE_PASSIVE_ROWS, ny, REFERENCE_NY).min(ny);
            d.passive_solid = (0..rows * nx).collect();
            (elastic, d)
        }
        "tensile" => {
            let mut d = GridDomain::new(nx, ny, 2)?;
            d.fix(
                (0..=ny)
                    .flat_map(|iy| [d.dof(0, iy, 0), d.dof(0, iy, 1)])
                    .collect::<Vec<_>>(),
            );
            let start = centred(ny / 2, load_y, ny);
            for (k, w) in patch_weights(load_y).into_iter().enumerate() {
                let dof = d.dof(nx, start + k, 0);
                d.load[dof] += w;
            }
            (elastic, d)
        }
        "thermal" => {
            let mut d = GridDomain::new(nx, ny, 1)?;
            // heat sink in the middle of the left edge
            let sink = ((ny as f64 / 10.0).round() as usize).max(1).min(ny);
            let start = centred(ny / 2, sink, ny);
            d.fix(
                (start..=start + sink)
                    .map(|iy| d.dof(0, iy, 0))
                    .collect::<Vec<_>>(),
            );
            // unit source per element, split over its four nodes
            for e in 0..d.num_elements() {
                for n in d.element_nodes(e) {
                    d.load[n] += 0.25;
                }
            }
            (Physics::thermal(CONDUCTIVITY_SOLID, CONDUCTIVITY_VOID), d)
        }
        "mechanism" => {
            // force inverter, half model with symmetry along the top edge
            let mut d = GridDomain::new(nx, ny, 2)?;
            d.fix((0..=nx).map(|ix| d.dof(ix, 0, 1)).collect::<Vec<_>>());
            let clamp = scaled(1, ny, REFERENCE_NY).min(ny);
            d.fix(
                (ny - clamp..=ny)
                    .flat_map(|iy| [d.dof(0, iy, 0), d.dof(0, iy, 1)])
                    .collect::<Vec<_>>(),
            );
            let input = d.dof(0, 0, 0);
            let output = d.dof(nx, 0, 0);
            d.load[input] = 1.0;
            d.output_vector[output] = 1.0;
            d.springs = vec![
                Spring {
                    dof: input,
                    stiffness: SPRING_IN,
                },
                Spring {
                    dof: output,
                    stiffness: SPRING_OUT,
                },
            ];
            (
                Physics::elastic(PhysicsKind::Mechanism, YOUNG_SOLID, YOUNG_VOID, POISSON),
                d,
            )
        }
        "twobar" => {
            return Err(Error::param(
                "twobar is an analytic truss; use the problems::twobar functions",
            ))
        }
        other => {
            return Err(Error::param(format!(
                "unknown problem `{other}`; available: {}",
                CATALOG.join(", ")
            )))
        }
    };
    if physics.kind != PhysicsKind::Mechanism {
        let mut d = domain;
        d.output_vector = d.load.clone();
        return finish(name, nx, ny, physics, v0, d);
    }
    finish(name, nx, ny, physics, v0, domain)
}

fn finish(
    name: &str,
    nx: usize,
    ny: usize,
    physics: Physics,
    v0: f64,
    domain: GridDomain,
) -> Result<ProblemSpec> {
    domain.validate()?;
    Ok(ProblemSpec {
        name: name.to_string(),
        nx,
        ny,
        physics,
        volume_target: v0,
        penalty: DEFAULT_PENALTY,
        filter_radius: FILTER_RADIUS_REF * nx as f64 / REFERENCE_NX,
        domain,
    })
}
