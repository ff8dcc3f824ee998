//! Regular-grid finite element analysis: plane-stress elasticity, heat
//! conduction and compliant mechanisms with adjoint sensitivities.

mod domain;
mod element;
mod model;
pub mod solver;

pub use domain::{GridDomain, Physics, PhysicsKind, Spring};
pub use element::{element_conductivity, element_stiffness_elastic, ElementMatrix};
pub use model::{
    assemble_and_solve, evaluate_objective, FeModel, ObjectiveEval, DENSITY_TOLERANCE,
};
