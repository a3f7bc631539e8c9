//! Volterra integral-equation solver for the one-phase Stefan problem of the
//! nonlinear conduction equation `theta_t / theta^2 = theta_xx`.
//!
//! The hodograph-type substitution `z_x = 1/theta`, `psi = theta` turns the
//! problem into the linear heat equation on a moving half line; [`volterra`]
//! solves the resulting boundary integral equation, [`fd`] is an independent
//! finite-difference check, and [`certify`] evaluates the small-time
//! contraction constants.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod config;
pub mod csvio;
pub mod error;
pub mod fd;
pub mod front;
pub mod hodograph;
pub mod kernel;
mod quadrature;
pub mod runner;
pub mod volterra;

pub use error::{Result, StefanError};
pub use front::{make_front, FrontSolution};
pub use hodograph::{LinearizedProfile, PhysicalProfile};
pub use volterra::{
    reconstruct_field, solve, BoundaryLaw, FieldSnapshot, FreeBoundaryTrajectory, KtauMode, ProblemSpec, SolverConfig,
};
