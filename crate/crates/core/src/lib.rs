//! Bayesian estimation and projection of the sex ratio at birth (SRB).
//!
//! The crate covers the whole statistical pipeline:
//!
//! * [`data`]: loading observations, country metadata, fertility and births tables;
//! * [`likelihood`]: the log-normal observation model with source-specific error;
//! * [`model`]: baselines, AR(1) fluctuations, the trapezoid transition and priors;
//! * [`mcmc`]: adaptive Metropolis-within-Gibbs fitting, diagnostics and chain stacking;
//! * [`projection`]: country classification and S1/S2/S3 scenario trajectories;
//! * [`births`]: annual and cumulative missing female births;
//! * [`validation`]: out-of-sample exercises and their metrics;
//! * [`synth`]: synthetic worlds drawn from the generative model.

pub mod births;
pub mod data;
pub mod likelihood;
pub mod mcmc;
pub mod model;
pub mod projection;
pub mod quantile;
pub mod synth;
pub mod validation;

mod error;

pub use error::{Error, Result};

/// First year of the annual model grid.
pub const GRID_START: i32 = 1950;
/// Last year of the annual model grid.
pub const GRID_END: i32 = 2100;
/// Year after which data from at-risk countries is excluded from the risk-free database.
pub const RISK_FREE_CUTOFF: f64 = 1970.0;
