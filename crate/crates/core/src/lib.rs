//! Resource estimation for linear-ODE solvers built on a linear embedding
//! and a quantum linear-system algorithm.
//!
//! The crate covers stability certificates for the generator, truncated
//! Taylor time stepping, the sparse embedding matrix and its measured
//! conditioning, analytic condition-number and success-probability
//! bounds, query-cost formulas and the end-to-end estimation pipeline.

pub mod bounds;
pub mod discretization;
pub mod embedding;
pub mod error;
pub mod numerics;
pub mod pipeline;
pub mod qlsa;
pub mod scenarios;
pub mod stability;
pub mod strategy;

pub use error::{QodeError, Result};
