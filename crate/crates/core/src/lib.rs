//! Tools for modeling irregularly spaced transaction durations.
//!
//! The crate is organized bottom-up:
//!
//! - [`duration`] builds trade, transaction-aggregated, price and volume
//!   duration series from tick records, with per-day bookkeeping.
//! - [`ingest`] reads and writes the tick CSV format.
//! - [`seasonality`] estimates a diurnal factor `s(t)` and divides it out.
//! - [`model`] holds ACD specifications, the conditional-mean recursion,
//!   innovation densities, likelihoods, moments and simulation.
//! - [`estimation`] maximizes ACD likelihoods and computes sandwich
//!   standard errors and BIC.
//! - [`diagnostics`] covers residual checks: Ljung-Box, excess dispersion,
//!   probability integral transforms.
//! - [`gof`] fits unconditional distributions and runs EDF tests against
//!   Monte-Carlo critical values.

pub mod diagnostics;
pub mod duration;
pub mod error;
pub mod estimation;
pub mod gof;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod rng;
pub mod seasonality;
mod stats;

pub use error::{AcdError, Result};
