//! Simulation and numerical verification toolkit for the stochastic heat
//! equation `∂_t u = ∂_x² u + b(u) + σ(u) ξ` on the circle `T = [-1, 1)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`torus`]: circle arithmetic, the parabolic metric and dyadic lattices.
//! * [`heat_kernel`]: two independent series for the heat kernel and the
//!   closed-form second moments of the Gaussian solution `H`.
//! * [`gaussian_field`]: exact spectral sampling of `H`, conditional
//!   variances and small-ball checks.
//! * [`spde`]: the nonlinear solver, coefficient truncations and the moment
//!   experiments built on it.
//! * [`fractal`]: box counting, Cantor sets, lattice hit counts and the
//!   image-dimension experiments.

pub mod checks;
pub mod fractal;
pub mod gaussian_field;
pub mod heat_kernel;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod spde;
pub mod spectral;
pub mod stats;
pub mod torus;

pub use torus::{SpaceTimePoint, TorusPoint};
