//! Equilibrium curves, closed-form coefficients, per-path market simulation and
//! analytics for a market of rebalancers with latent parent targets and trackers
//! following a common stochastic target.
//!
//! Everything here is `no_std` with `alloc`; IO and threading live in the companion crate.
#![no_std]
// Guards written as `!(x > y)` must reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod coeffs;
pub mod model;
pub mod ode;
pub mod quad;
pub mod sim;

pub use model::{kappa_eval, validate_params, EquilibriumKind, ModelParams, PenaltySpec, TimeGrid};
pub use ode::{explicit_cross_checks, solve_curves, solve_resolved, EquilibriumCurves, SolveError};
