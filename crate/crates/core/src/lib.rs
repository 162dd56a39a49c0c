//! Blind signal classification by maximizing classification gain.
//!
//! The library relaxes hard class labels to a soft membership matrix, solves
//! the relaxed log-gain minimization by projected gradient descent, and rounds
//! the result back to a hard labeling. Reference classifiers (k-means, EM,
//! exhaustive search) and an evaluation harness are included.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod gain;
pub mod model;
pub mod rng;
pub mod rounding;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SampleSetF64 = model::SampleSet<f64>;
pub type SampleSetF32 = model::SampleSet<f32>;
pub type MembershipF64 = model::MembershipMatrix<f64>;
pub type MembershipF32 = model::MembershipMatrix<f32>;
pub type ClassStatsF64 = model::ClassStats<f64>;
pub type ClassStatsF32 = model::ClassStats<f32>;
pub type SolveReportF64 = solver::SolveReport<f64>;
pub type SolveReportF32 = solver::SolveReport<f32>;
pub type RoundingReportF64 = rounding::RoundingReport<f64>;
pub type RoundingReportF32 = rounding::RoundingReport<f32>;
