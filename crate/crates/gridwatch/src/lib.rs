//! Line outage detection and localization from streaming smart meter voltages.
//!
//! - [`grid`]: topology, admittance matrix, outages, test-grid catalog.
//! - [`powerflow`]: AC Newton-Raphson and the linear sensitivity `Z = Y_red^-1`.
//! - [`simulate`]: pre/post-outage voltage streams and their Gaussian models.
//! - [`detect`]: Bayesian change-point posterior, stopping rule, online MLE.
//! - [`localize`]: conditional-correlation comparison of covariances.
//! - [`benchmark`]: seeded Monte Carlo harness over the full pipeline.

pub mod benchmark;
pub mod detect;
pub mod error;
pub mod grid;
pub mod localize;
pub mod powerflow;
pub mod simulate;

pub use error::{GridwatchError, Result};
