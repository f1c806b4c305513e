use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hyperparameters and ablation switches for one RGAN run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub noise_dim: usize,
    /// Critic/regressor updates per generator update.
    pub n_critic: usize,
    /// Gradient-penalty weight β.
    pub gp_weight: f64,
    /// Generator regression weight α.
    pub generator_reg_weight: f64,
    /// Critic-side regression weight γ.
    pub critic_reg_weight: f64,
    pub learning_rate: f64,
    pub batch: usize,
    /// Generator updates.
    pub iterations: usize,
    /// Critic and regressor share their first hidden layer. When off, the
    /// regressor keeps its own trunk and is frozen after pretraining.
    pub share_trunk: bool,
    pub generator_regression: bool,
    pub critic_regression: bool,
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 8,
            n_critic: 5,
            gp_weight: 0.5,
            generator_reg_weight: 1.0,
            critic_reg_weight: 1.0,
            learning_rate: 1e-4,
            batch: 32,
            iterations: 10_000,
            share_trunk: true,
            generator_regression: true,
            critic_regression: true,
            pretrain_epochs: 200,
            pretrain_learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl GanConfig {
    /// Plain WGAN-GP: unshared trunk and no regression terms.
    pub fn wgan_gp(&self) -> Self {
        Self {
            share_trunk: false,
            generator_regression: false,
            critic_regression: false,
            ..self.clone()
        }
    }

    pub fn is_wgan_gp(&self) -> bool {
        !self.share_trunk && !self.generator_regression && !self.critic_regression
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("gp_weight", self.gp_weight),
            ("generator_reg_weight", self.generator_reg_weight),
            ("critic_reg_weight", self.critic_reg_weight),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {w}")));
            }
        }
        if self.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if self.noise_dim == 0 || self.batch == 0 {
            return Err(Error::Config("noise_dim and batch must be positive".into()));
        }
        for (name, lr) in [
            ("learning_rate", self.learning_rate),
            ("pretrain_learning_rate", self.pretrain_learning_rate),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}
