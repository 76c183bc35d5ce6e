//! Robust hybrid beamforming for RIS-aided mmWave systems under random
//! blockages: block stochastic gradient descent on a smooth-hinge outage
//! surrogate, with Monte Carlo outage/effective-rate evaluation and the
//! standard baseline schemes.

pub mod channel;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod optimizer;
pub mod rng;
pub mod selftest;
pub mod surrogate;

pub use error::{OutminError, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dynamically sized complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dynamically sized complex column vector.
pub type CVec = nalgebra::DVector<C64>;
