//! Benchmark problems: the grid catalog and the analytic two-bar truss.

mod catalog;
pub mod twobar;

pub use catalog::*;
pub use twobar::{twobar_eval, twobar_siren_forward, TwoBarEval, TwoBarNetOutput, TwoBarState};
