//! Stochastic differential equations driven by two-sided Lévy processes, their conjugacy to
//! random differential equations, pullback attractors and linearization.

// `!(x > 0.0)` is used on purpose so that NaN is rejected; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod attractors;
pub mod conjugacy_ito;
pub mod error;
pub mod flows;
pub mod harness;
pub mod levy_paths;
pub mod linalg;
pub mod linearization;
pub mod marcus;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
pub use levy_paths::{Driver, JumpLaw, LevyTriplet, ShiftView, TimeGrid, TwoSidedPath};
pub use linalg::{Matrix, Vector};
