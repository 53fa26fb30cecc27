//! Seismic fragility curves from scarce simulation data.
//!
//! This crate fits Gaussian process surrogates (homoskedastic or
//! heteroskedastic nugget) to log-EDP observations, turns them into
//! families of fragility curves with propagated metamodel uncertainty,
//! and apportions the curve uncertainty to the mechanical inputs with
//! aggregated Sobol indices and MMD-based kernel indices, both estimated
//! by pick-freeze with a posterior-draw / bootstrap variance split.
//!
//! Modules follow the processing chain:
//!
//! * [`kernel`] — Matérn 5/2 covariance and Gram-matrix assembly.
//! * [`gp`] — surrogate fitting, kriging prediction, posterior sampling,
//!   leave-one-out diagnostics.
//! * [`fragility`] — fragility curves, quantile and bi-level quantile
//!   curves, binned Monte-Carlo reference.
//! * [`gsa`] — pick-freeze designs, aggregated Sobol and beta-k indices,
//!   metamodel/Monte-Carlo variance split.
//! * [`testbed`] — synthetic benchmark generator with analytic truth and
//!   brute-force oracles.
//! * [`cli`] — batch front end (also exposed through the `fragility-uq`
//!   binary).

pub mod acceptance;
pub mod cli;
pub mod error;
pub mod fragility;
pub mod gp;
pub mod gsa;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod stats;
pub mod testbed;

pub use error::{Error, Result};
