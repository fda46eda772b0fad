//! Simulation, fitting and photon-statistics toolkit for a collective atomic
//! spin wave coupled to a single low-finesse cavity mode.
//!
//! Rates and detunings are [`AngularFrequency`] values in rad/µs; times are
//! in µs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod ode;
pub mod retrieval;
pub mod scan;
pub mod spectrum;
pub mod stats;
pub mod units;

pub use error::{Error, Result};
pub use units::AngularFrequency;
