//! Numerical solution of convolution equations from measurement-error models
//! in a space of tempered generalized functions.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: uniform grids on R or R², the continuous-convention Fourier
//!   transform (`∫f(x)e^{ix·s}dx`), convolution, quadrature and spectral
//!   differentiation.
//! * [`gf`]: generalized functions as a gridded regular part plus delta-type
//!   atoms, test functions, the weak distance, polynomial bound classes and
//!   Gaussian random generalized functions.
//! * [`estimators`]: empirical characteristic functions, Nadaraya–Watson
//!   conditional moments with the indicator kernel and their clipped spectra.
//! * [`solvers`]: deconvolution with a known error characteristic function and
//!   the two-unknown system of errors-in-variables regression.
//! * [`sim`]: data generators, closed-form error characteristic functions and
//!   the supersmooth ill-posedness sequence.
//! * [`study`]: Monte Carlo drivers shared by the CLI and the acceptance suite.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod gf;
pub mod grid;
pub mod quad;
pub mod selftest;
pub mod sim;
pub mod solvers;
pub mod study;

pub use error::{Error, Result};
pub use num_complex::Complex64;
