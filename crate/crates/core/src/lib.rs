//! Simulation of multimode Gaussian and photon-added/subtracted optical states,
//! homodyne sampling, and negativity detection with a small neural network or
//! maximum-likelihood tomography.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod features;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod maxlik;
pub mod mlp;
pub mod quadrature;
pub mod registry;
pub mod rng;
pub mod sampler;
pub mod wigner;

pub use error::{Error, Result};
