//! Independent reference implementations used to validate the main pipeline.
//!
//! Nothing here shares stepping or quadrature code with the modules under
//! test: the brute-force charge solver uses forward Euler with left-rectangle
//! Volterra sums on its own uniform grid, the manufactured-solution machinery
//! computes residual forcings with composite Simpson quadrature, and the
//! lattice solver evolves the regularized field with an explicit
//! finite-difference scheme.

pub mod brute;
pub mod lattice;
pub mod manufactured;
pub mod reference;

pub use brute::{brute_force_charges, BruteForceParams};
pub use lattice::{LatticeParams, LatticeSolver};
pub use manufactured::{manufactured_forcing, ManufacturedForcing, ManufacturedTarget};
pub use reference::{j1_integral, j1_series};
