//! Regularised Dean–Kawasaki SPDE on the flat torus: spectral solver,
//! independent-particle reference, and Hamilton–Jacobi duality benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod duality;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod parallel;
pub mod particles;
pub mod quadrature;
pub mod regularization;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod test_function;
pub mod torus;

pub use error::{Error, Result};
