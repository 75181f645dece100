//! Multiple imputation of missing tabular data with denoising autoencoders.
//!
//! The crate bundles everything needed to run imputation benchmarks end to
//! end: a small dense-network substrate ([`nn`]), the autoencoder topology
//! ([`dae`]), missingness simulation ([`missingness`]), the imputation
//! methods ([`engine`]), quality metrics ([`metrics`]), dataset handling
//! ([`dataset`]) and the experiment runner ([`experiment`]).

pub mod dae;
pub mod dataset;
pub mod engine;
mod error;
pub mod experiment;
mod matrix;
pub mod metrics;
pub mod missingness;
pub mod nn;

pub use error::{Error, Result};
pub use matrix::Matrix;
