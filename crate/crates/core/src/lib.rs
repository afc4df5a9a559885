//! Fully discrete schemes for semilinear parabolic SPDEs on an interval,
//! driven by additive fractional Brownian motion and Poisson jumps, with a
//! strong-convergence measurement harness.

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fem;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod schemes;

pub use error::{Error, Result};

/// Library name and version, embedded in every output file.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
