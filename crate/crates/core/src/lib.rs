//! User assignment for multi-antenna-domain C-RAN deployments.
//!
//! The crate covers the whole chain from channel generation to certified
//! bounds:
//!
//! * [`scenario`] drops users, draws correlated Rician channels and moves users.
//! * [`precoding`] builds the per-domain leakage-minimising zero-forcing
//!   precoder and the joint (global) zero-forcing benchmark.
//! * [`coupling`] turns channels and precoders into the interference coupling
//!   matrix and evaluates the leakage objective.
//! * [`bcd`] runs block-coordinate descent over the per-domain assignment
//!   vectors.
//! * [`lp`] is a small dense simplex solver with dual certificates.
//! * [`bounds`] enumerates assignment columns and computes Dantzig-Wolfe,
//!   column-generation and dual lower bounds together with gap certificates.
//! * [`eval`] computes SINR and sum-rate and drives Monte Carlo experiments.
//! * [`cli`] is the command-line front end used by the `cran-ua` binary.

pub mod bcd;
pub mod bounds;
pub mod cli;
pub mod coupling;
mod error;
pub mod eval;
pub mod lp;
pub mod numfmt;
pub mod precoding;
pub mod scenario;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
