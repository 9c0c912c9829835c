//! Estimation of conditional average treatment effects (CATEs) from
//! observational data under selection on observables.
//!
//! The pipeline combines inverse-probability-weighted modified-covariate
//! regressions with LASSO variable selection, honest sample splitting,
//! bagging over repeated splits, clustered bootstrap standard errors, and
//! quota-constrained treatment assignment rules. A synthetic data generator
//! with known ground-truth effects serves as the verification oracle.

pub mod data;
pub mod effects;
pub mod error;
pub mod policy;
pub mod reporting;
pub mod inference;
pub mod pipeline;
pub mod solvers;
pub mod linalg;
pub mod propensity;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
