//! Numerical laboratory for singular adaptive-dynamics diffusions.
//!
//! The trait-substitution diffusion `dX = (b + εb̃)dt + √ε σ dW` degenerates on
//! the set `Γ` of evolutionary singularities. This crate builds its
//! coefficients from a fitness function and a mutation kernel, simulates it
//! with absorption at `Γ`, classifies singularities, evaluates
//! Freidlin–Wentzell actions and quasi-potentials, and runs exit-problem
//! Monte Carlo experiments.
//!
//! Numeric kernels in [`linalg`] and [`quadrature`] are generic over
//! [`Scalar`]; the model layer works in `f64` through [`Vector`] and [`Matrix`].

pub mod action;
pub mod classify;
pub mod cli_io;
pub mod coeff;
pub mod cubature;
pub mod domain;
pub mod error;
pub mod exit;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod sde;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Column vector in trait space.
pub type Vector = nalgebra::DVector<f64>;
/// Square matrix over trait space.
pub type Matrix = nalgebra::DMatrix<f64>;
