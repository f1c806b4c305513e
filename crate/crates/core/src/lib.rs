//! Regression-aware Wasserstein GAN augmentation for small tabular
//! regression datasets.
//!
//! The pipeline picks informative training rows by active learning
//! ([`active`]), trains a generator against a critic that shares its first
//! hidden layer with a label regressor ([`rgan`]), scores candidate generated
//! batches by MMD and a cross-validated diversity score ([`quality`]), and
//! measures the effect on downstream soft-sensor models ([`regress`]).
//! [`harness`] ties the phases together and writes reports.

pub mod active;
pub mod data;
mod error;
pub mod harness;
pub mod kernel;
pub mod numeric;
pub mod quality;
pub mod regress;
pub mod rgan;

pub use error::{Error, Result};

/// Version string recorded in run manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
