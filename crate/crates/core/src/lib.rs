//! Brownian motion with varying dimension on a plane with a flag-pole.
//!
//! The state space is the plane with a closed disk of radius `epsilon` shorted
//! to a single point `a*`, joined at `a*` to a half-line (the pole) of measure
//! weight `p`. The crate provides the geometry of that space, exact-in-law
//! simulation of the process, closed-form bound shapes and Monte Carlo
//! estimators used to check them.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod montecarlo;
pub mod process;
pub mod radial;

pub use error::{Error, Result};
pub use geometry::{EPoint, ModelParams};
