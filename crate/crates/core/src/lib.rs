//! Gap solitons of the 2D Gross–Pitaevskii equation with a separable
//! periodic potential `V(x1, x2) = eta * (W(x1) + W(x2))`.
//!
//! The pipeline runs bottom-up:
//!
//! * [`bloch1d`] — 1D Bloch bands and edge eigenfunctions of `-u'' + eta W u`,
//! * [`resonance`] — the gap-opening coupling `eta0` and the coupled-mode coefficients,
//! * [`cme2d`] — stationary and time-dependent coupled-mode envelopes,
//! * [`jacobian`] — kernel diagnostics of the linearised envelope system,
//! * [`elliptic2d`] — full 2D solutions, epsilon-convergence and GP time stepping.

pub mod bloch1d;
pub mod cme2d;
pub mod elliptic2d;
mod error;
pub mod io;
pub mod jacobian;
pub mod linalg;
pub mod potential;
pub mod resonance;
pub mod spectral;

pub use bloch1d::{BandData, EdgeEigenfunctions};
pub use cme2d::{ClassTag, CmeField, RadialProfile, SolutionBranch};
pub use elliptic2d::GridField2D;
pub use jacobian::LinearizedOperator;
pub use error::{Error, Result};

pub use potential::PeriodicPotential;
pub use resonance::ResonanceCoefficients;

pub use num_complex::Complex64 as C64;
