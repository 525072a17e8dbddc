//! Simulation core for the 3D Klein-Gordon field coupled to oscillators
//! concentrated at finitely many points.
//!
//! The field equation with point sources of strength `zeta_j(t)` reduces to a
//! first-order delay Volterra integro-differential system for the charge
//! vector `zeta(t)`; the field is reconstructed afterwards from retarded
//! terms plus Bessel-kernel tail convolutions over the charge history. This
//! crate contains the whole numerical pipeline:
//!
//! * [`model`] — system geometry, Yukawa Green matrix, potentials and their
//!   Wirtinger gradients, coercivity data;
//! * [`special`] — the Bessel function `J1` and the light-cone tail kernel;
//! * [`freefield`] — spectral evaluation of the free evolution of the
//!   regular (Gaussian-sum) initial data;
//! * [`sources`] — the driving terms `lambda_j(t)` of the charge equations;
//! * [`charges`] — the method-of-steps solver with breakpoint handling and
//!   the Lipschitz truncation safeguard;
//! * [`field`] — reconstruction of the field, of its regular part and of the
//!   boundary-condition residual;
//! * [`diagnostics`] — conserved energy, a-priori bound check, convergence
//!   studies;
//! * [`oracle`] — independent reference implementations (brute-force charge
//!   solver, manufactured solutions, a regularized lattice solver) used to
//!   validate the main pipeline.
//!
//! The crate is `no_std` (with `alloc`): every floating-point primitive goes
//! through `libm`, so results are bitwise reproducible across platforms and
//! thread counts.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod charges;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod freefield;
pub mod geom;
pub mod model;
pub mod oracle;
pub mod sources;
pub mod special;

pub use error::Error;

/// Complex charge value.
pub type Complex = num_complex::Complex64;
