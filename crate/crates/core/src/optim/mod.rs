//! Optimizers and the outer optimization loop.

mod adam;
mod mma;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use mma::{mma_step, MmaConfig, MmaState};
mod run;
mod twobar;

pub use run::{
    gradient_angle, mma_bounds, run_optimization, BestDesign, DesignMap, DesignProblem, Evaluation,
    OptimizerConfig, ProjectionOrder, Record, RunSettings, Trajectory,
};
pub use twobar::{run_twobar, TwoBarParam, TwoBarRecord, TwoBarRun};
