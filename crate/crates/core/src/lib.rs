//! Longitudinal causal effect estimation when past treatment decides who
//! stays eligible for future treatment.
//!
//! The crate estimates eligible treatment effects (ETE) and expected
//! cumulative outcomes under treatment policies (EOE) with outcome
//! regression, inverse probability weighting and doubly robust estimators.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod learners;
pub mod nuisance;
pub mod oracle;
pub mod panel;
pub mod simlab;

pub use error::{Error, Result};
