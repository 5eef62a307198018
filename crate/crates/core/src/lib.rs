//! Numerical laboratory for periodic homogenization of nonlocal stochastic PDEs.
//!
//! Two model families share the machinery: jump diffusions with an integrable kernel
//! (Part I) and α-stable drivers (Part II). Torus cell problems yield effective
//! coefficients, which are then checked against heterogeneous SPDE solves, particle
//! Monte Carlo and filtering experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cell;
pub mod cli;
pub mod coefficients;
pub mod error;
pub mod fixtures;
pub mod kernel;
pub mod operators;
pub mod particle;
pub mod quadrature;
pub mod report;
pub mod spde;
pub mod spectral;
pub mod stats;
pub mod zakai;

pub use error::{Error, Result};
