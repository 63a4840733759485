//! Ground states of the nonlinear Schrödinger equation with an
//! inverse-square potential, `i u_t - L_a u + |u|^p u = 0` with
//! `L_a = -Δ + a/|x|^2`, restricted to radial functions.
//!
//! The crate computes the positive ground state by shooting from the
//! singular origin, checks its Pohozaev-type monotonicity properties,
//! discretizes the linearized operators and their dichotomy eigenpair, and
//! runs Crank–Nicolson dynamics with modulation and virial diagnostics.

pub mod error;
pub mod integrator;
pub mod ode;
pub mod shooting;
pub mod special;

pub use error::{Error, Result};
pub use ode::{OdeState, Params};
pub mod grid;
pub mod groundstate;
pub mod linalg;
pub mod spectral;
pub mod io;
pub mod nls_sim;
