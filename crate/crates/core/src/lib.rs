//! Spectral distributions of self-adjoint polynomials in freely independent
//! self-adjoint random variables.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`linearization`] turns a self-adjoint polynomial `p` into an affine
//!    matrix pencil `L = b_0 ⊗ 1 + Σ b_j ⊗ x_j` with Hermitian coefficients.
//! 2. [`spectra`] evaluates the `M_N(ℂ)`-valued Cauchy transform of each
//!    summand `b_j ⊗ x_j` from the scalar law of `x_j`.
//! 3. [`subordination`] adds the summands with the operator-valued free
//!    additive convolution, solved as a fixed point of `w ↦ h_y(h_x(w)+b)+b`.
//! 4. [`density`] reads the `(1,1)` corner at `Λ_ε(z)` and applies Stieltjes
//!    inversion on a grid.
//!
//! [`oracle`] (non-crossing partition moments) and [`rmt`] (random matrix
//! Monte Carlo) provide independent checks of the result.

pub mod density;
pub mod error;
pub mod linalg;
pub mod linearization;
pub mod ncpoly;
pub mod oracle;
pub mod rmt;
pub mod spectra;
pub mod subordination;

pub use error::{Error, Result};
pub use linalg::{CMatrix, HalfPlanePoint};
pub use linearization::Linearization;
pub use ncpoly::NcPolynomial;
pub use spectra::{OpVarLeaf, SpectralMeasure};
pub use subordination::{OpVar, SolverConfig};

pub use num_complex::Complex64;
