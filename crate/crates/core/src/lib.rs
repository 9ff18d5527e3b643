//! Numerical Finsler geometry: metric kernels, the canonical nonlinear
//! connection and its curvature, parallel transport and holonomy samples, and
//! rank estimates for the curvature algebra.

pub mod algebra;
pub mod cli;
pub mod connection;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod heisenberg;
pub mod jet;
pub mod transport;

pub use error::{Error, Result};
