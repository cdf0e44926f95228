//! Sparse multidimensional harmonic retrieval.
//!
//! The crate is organised bottom-up:
//!
//! - [`complex`]: split-storage complex arrays, the complex soft threshold and
//!   the power-iteration Lipschitz estimate.
//! - [`spectral`]: radix-2 FFT, linear convolution and the Toeplitz /
//!   doubly-block-Toeplitz expansions that back the structured layers.
//! - [`harmonic`]: partial Fourier dictionaries, Gram matrices and synthetic
//!   sparse instances and datasets.
//! - [`solvers`]: ISTA and FISTA for the l1-regularised least-squares problem.
//! - [`nets`]: unfolded networks (LISTA, LISTA-Toeplitz 1D/2D, ConvLISTA),
//!   backpropagation and Adam training.
//! - [`bench`]: recovery metrics, noise sweeps, complexity reports and the
//!   IQ-grid ingestion path used by the `mhr-bench` binary.

pub mod bench;
mod binio;
pub mod complex;
pub mod error;
pub mod harmonic;
pub mod nets;
pub mod rng;
pub mod solvers;
pub mod spectral;

pub use complex::{ComplexArray, Threshold};
pub use num_complex::Complex64;
pub use error::{Error, Result};
