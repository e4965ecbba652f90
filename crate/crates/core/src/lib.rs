//! Time-dependent Fröhlich transformation (TDFT) for weakly perturbed quantum
//! systems, applied to two atoms crossing a single-mode cavity one after the
//! other.
//!
//! Units: time in μs, length in μm, angular frequencies in rad/μs (a value
//! quoted in "MHz" is read as rad/μs), velocities in μm/μs (= m/s).

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod error;
pub mod oracle;
pub mod quadrature;
pub mod quantum;
pub mod sweep;
pub mod tdft;

pub use error::{Error, Result};
