//! Sequential sparse hierarchical quadratic programming.
//!
//! Solves prioritized stacks of non-linear constraints where each level
//! minimizes the number of violated constraints (an l0 surrogate) or the
//! squared violation, without degrading any level above it.

pub mod bench;
pub mod cli;
pub mod driver;
pub mod error;
pub mod linalg;
pub mod model;
pub mod nqp;
pub mod problem_file;
pub mod selection;
pub mod shqp;

pub use error::{Error, Result};
