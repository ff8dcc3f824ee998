//! Density-based topology optimization with neural reparameterizations.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod density;
pub mod error;
pub mod fem;
pub mod io;
pub mod optim;
pub mod problems;
pub mod reparam;
pub mod runner;

pub use error::{Error, Result};
