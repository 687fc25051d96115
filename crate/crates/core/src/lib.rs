//! Simulation laboratory for the multidimensional elephant random walk with
//! stops: exact dynamics, Mittag-Leffler special functions and sampling,
//! exact finite-n moment oracles and a Monte Carlo verification harness.

pub mod coefficients;
pub mod error;
pub mod harness;
pub mod mittag;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use model::{derive_params, ModelParams, Regime};
