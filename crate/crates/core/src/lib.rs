//! Numerical laboratory for the parabolic-parabolic Keller-Segel system with
//! logistic source on a periodic box,
//!
//! ```text
//! u_t = Δu − χ∇·(u∇v) + u(a − bu)
//! v_t = Δv − λv + μu
//! ```
//!
//! The crate provides two independent solvers (a Duhamel fixed-point solver
//! for short horizons and an exponential-Euler stepper for long runs), the
//! closed-form thresholds and bounds attached to the system, and verdict
//! checks that turn diagnostic series into pass/fail statements.

pub mod constants;
pub mod error;
pub mod harness;
pub mod imex;
pub mod mild;
pub mod spectral;
pub mod types;

pub use error::{Error, Result};
pub use types::{Field, Grid, Params, SimState, VectorField};
