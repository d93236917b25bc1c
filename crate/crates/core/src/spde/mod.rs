//! The nonlinear system: coefficients, their truncations and
//! regularizations, the spectral solver and the experiments built on it.

pub mod coefficients;
pub mod experiments;
pub mod regularize;
pub mod solver;

pub use coefficients::{Coefficients, DiffusionSpec, DriftSpec};
pub use regularize::{regularize_sigma, LevelSetProbe, RegularizeError, RegularizedSigma};
pub use solver::{solve, InitialData, NoiseKind, Scheme, Solver, SolverConfig, SolverError, Trajectory};
