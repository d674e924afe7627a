//! Gaussian random fields with stationary increments described by a spectral
//! density: variograms and covariances by quadrature, sufficient and necessary
//! equivalence tests for pairs of models, finite-rank reproducing kernels,
//! exact and spectral simulation, and likelihood-ratio experiments.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equivalence;
pub mod error;
pub mod experiments;
pub mod model;
pub mod quadrature;
pub mod rkhs;
pub mod simulate;

pub use error::{Error, Result};
