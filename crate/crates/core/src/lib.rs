//! Sharpness-aware second-order latent factor models for high-dimensional,
//! incomplete rating matrices.
//!
//! The central trainer ([`trainer::train_sslf`]) solves a damped
//! Gauss-Newton system by conjugate gradient with matrix-free curvature
//! products, evaluating gradient and curvature at a sharpness-aware
//! perturbed point. Per-entry SGD and Adam trainers are included as
//! baselines.

pub mod baselines;
pub mod cg;
pub mod checkpoint;
pub mod cli;
pub mod curvature;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod sam;
pub mod trainer;
pub mod vector;

pub use error::{Error, Result};
