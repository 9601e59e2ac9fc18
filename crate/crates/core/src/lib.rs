//! Monte Carlo design of distributed detection systems with dependent
//! observations and an arbitrary fixed fusion rule.

pub mod error;
pub mod cli;
pub mod config;
pub mod detector;
pub mod exact_sum;
pub mod fusion;
pub mod model;
pub mod optimizer;
pub mod sampling;
pub mod scenarios;

pub use error::{Error, Result};
