//! Monte Carlo lab for tail and moment inequalities of isotropic log-concave
//! random vectors: samplers, estimators with confidence intervals, executable
//! bound formulas with constant fitting, and a reproducible experiment runner.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod combinatorics;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod isotropy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
