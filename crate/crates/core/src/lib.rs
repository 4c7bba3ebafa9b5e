//! Debiased-Lasso hypothesis testing for high-dimensional linear regression
//! under Gaussian random designs.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] builds covariance models, random designs and noisy responses.
//! * [`solver`] fits the Lasso by cyclic coordinate descent and calibrates
//!   the regularization level.
//! * [`debias`] turns a Lasso fit into the debiased estimator and the
//!   robust noise-scale estimate.
//! * [`inference`] converts debiased estimates into p-values and decisions
//!   and scores them against ground truth.
//! * [`theory`] holds the analytic power predictions and minimax bounds.
//! * [`covest`] estimates the design covariance by hard thresholding.
//! * [`harness`] orchestrates replicated experiments and writes reports.

// `!(x > 0.0)` is the idiom for positivity checks that also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covest;
pub mod debias;
pub mod dist;
pub mod error;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod theory;

pub use error::{Result, SdlError};
