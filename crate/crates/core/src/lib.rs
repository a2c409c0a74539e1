//! Gradient-flow simulation and rank diagnostics for small bias-free ReLU
//! networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense matrices, SVD, norms, pseudoinverse.
//! - [`network`]: parameters, datasets, forward passes.
//! - [`gradients`]: square/exponential/logistic losses and backprop.
//! - [`flow`]: Euler/RK4 integration of gradient flow with conservation monitors.
//! - [`geometry`]: activation regions for two planar inputs.
//! - [`constructions`]: explicit low-rank and deepened witness networks.
//! - [`diagnostics`]: rank reports and norm-ratio bounds.
//! - [`experiments`]: seeded Monte Carlo harnesses with optional rayon parallelism.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constructions;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod geometry;
pub mod gradients;
pub mod linalg;
pub mod network;

pub use error::{Error, Result};
pub use linalg::Mat;
pub use network::{Dataset, Params};
