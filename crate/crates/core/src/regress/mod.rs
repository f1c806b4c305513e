//! Downstream soft-sensor regressors and their error metrics.
//!
//! The kernel method is kernel ridge regression, used in place of an
//! epsilon-insensitive SVR; reports label it "kernel-ridge (SVR stand-in)".

mod kernel_ridge;
mod metrics;
mod mlp;

use serde::{Deserialize, Serialize};

pub use kernel_ridge::KernelRidge;
pub use metrics::{evaluate, metrics_from, Metrics};
pub use mlp::MlpRegressor;

use crate::data::TabularDataset;
use crate::kernel::Bandwidth;
use crate::numeric::Matrix;
use crate::{Error, Result};

pub trait Regressor: Send + Sync {
    fn predict(&self, features: &Matrix) -> Result<Vec<f64>>;
}

/// Something that can fit a [`Regressor`] to a dataset.
pub trait RegressorFactory: Sync {
    fn fit(&self, ds: &TabularDataset) -> Result<Box<dyn Regressor>>;
}

impl<F> RegressorFactory for F
where
    F: Fn(&TabularDataset) -> Result<Box<dyn Regressor>> + Sync,
{
    fn fit(&self, ds: &TabularDataset) -> Result<Box<dyn Regressor>> {
        self(ds)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegressorSpec {
    KernelRidge {
        #[serde(default)]
        bandwidth: Bandwidth,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_mlp_lr")]
        learning_rate: f64,
        #[serde(default = "default_mlp_batch")]
        batch: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_ridge() -> f64 {
    1e-3
}
fn default_hidden() -> Vec<usize> {
    vec![32, 16]
}
fn default_epochs() -> usize {
    500
}
fn default_mlp_lr() -> f64 {
    1e-3
}
fn default_mlp_batch() -> usize {
    32
}

impl RegressorSpec {
    pub fn kernel_ridge() -> Self {
        RegressorSpec::KernelRidge {
            bandwidth: Bandwidth::MedianHeuristic,
            ridge: default_ridge(),
        }
    }

    pub fn mlp(seed: u64) -> Self {
        RegressorSpec::Mlp {
            hidden: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_mlp_lr(),
            batch: default_mlp_batch(),
            seed,
        }
    }

    /// Name used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            RegressorSpec::KernelRidge { .. } => "kernel-ridge (SVR stand-in)",
            RegressorSpec::Mlp { .. } => "mlp (DNN)",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RegressorSpec::KernelRidge { bandwidth, ridge } => {
                bandwidth.validate()?;
                if !(*ridge >= 0.0) {
                    return Err(Error::Config(format!("ridge strength must be >= 0, got {ridge}")));
                }
            }
            RegressorSpec::Mlp {
                hidden,
                epochs: _,
                learning_rate,
                batch,
                ..
            } => {
                if hidden.contains(&0) {
                    return Err(Error::Config("MLP hidden layers must be non-empty".into()));
                }
                if !(*learning_rate > 0.0) || *batch == 0 {
                    return Err(Error::Config(
                        "MLP needs a positive learning rate and batch size".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Copy with the MLP seed replaced; kernel ridge is seed-free.
    pub fn with_seed(&self, new_seed: u64) -> Self {
        let mut s = self.clone();
        if let RegressorSpec::Mlp { seed, .. } = &mut s {
            *seed = new_seed;
        }
        s
    }
}

impl RegressorFactory for RegressorSpec {
    fn fit(&self, ds: &TabularDataset) -> Result<Box<dyn Regressor>> {
        fit(self, ds)
    }
}

pub fn fit(spec: &RegressorSpec, ds: &TabularDataset) -> Result<Box<dyn Regressor>> {
    spec.validate()?;
    if ds.len() < 2 {
        return Err(Error::Contract(format!(
            "fitting needs at least 2 samples, got {}",
            ds.len()
        )));
    }
    Ok(match spec {
        RegressorSpec::KernelRidge { bandwidth, ridge } => {
            Box::new(KernelRidge::fit(ds.features(), ds.labels(), *bandwidth, *ridge)?)
        }
        RegressorSpec::Mlp {
            hidden,
            epochs,
            learning_rate,
            batch,
            seed,
        } => Box::new(MlpRegressor::fit(ds, hidden, *epochs, *learning_rate, *batch, *seed)?),
    })
}
