//! Reduced Hartree-Fock perturbation theory on finite lattices.
//!
//! The crate solves the convex rHF ground-state problem with fractional
//! occupations, classifies the Fermi-level structure, and computes
//! Rayleigh-Schrödinger coefficients of the density matrix and the energy in
//! both the non-degenerate and the degenerate (fractionally occupied Fermi
//! shell) regimes. Verification helpers for the (2n+1) rule and finite
//! difference oracles live alongside.
//!
//! Module map:
//! - [`model`]: lattice systems, density matrices, energy and mean-field maps.
//! - [`ground_state`]: optimal damping SCF, Fermi structure, uniqueness test.
//! - [`nondeg_pt`]: contour-integral response operators and the density recursion.
//! - [`mo_pt`]: coupled-perturbed orbital recursion.
//! - [`deg_pt`]: exponential chart, Θ operator and the degenerate recursion.
//! - [`wigner`]: projector Π, (2n+1)-rule slope checks, trace identity.
//! - [`fd`]: finite-difference energy derivatives.
//! - [`validation`]: the property-based validation suite used by the CLI.

pub mod combinatorics;
pub mod deg_pt;
pub mod error;
pub mod fd;
pub mod ground_state;
pub mod io;
pub mod linalg;
pub mod mo_pt;
pub mod model;
pub mod nondeg_pt;
pub mod par;
pub mod validation;
pub mod wigner;

pub use error::{Error, Result};
pub use ground_state::{classify, solve_scf, Classification, GroundState, ScfOptions};
pub use model::{DensityMatrix, LatticeSystem, Potential, Tolerances};
