use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::LabelBudget;
use crate::quality::KernelSpec;
use crate::regress::RegressorSpec;
use crate::rgan::GanConfig;
use crate::{Error, Result};

/// Where the rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        name: String,
        #[serde(default = "default_rows")]
        rows: usize,
        #[serde(default)]
        noise_sd: f64,
    },
    Csv {
        path: PathBuf,
        label: String,
    },
}

fn default_rows() -> usize {
    500
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            name: "sinusoid-2d".into(),
            rows: default_rows(),
            noise_sd: 0.0,
        }
    }
}

impl DatasetSource {
    /// Short name used in the `case` report column.
    pub fn case_name(&self) -> String {
        match self {
            DatasetSource::Synthetic { name, .. } => name.clone(),
            DatasetSource::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }
}

/// Pool/test partition of the loaded rows. Training rows are later drawn
/// from the pool.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub pool: usize,
    pub test: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { pool: 300, test: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveConfig {
    /// When off, training rows are a seeded uniform subset of the pool.
    pub enabled: bool,
    /// Initial clustered labels; absent means chosen by silhouette.
    pub initial: Option<usize>,
    /// Training set size.
    pub max: usize,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            initial: None,
            max: 50,
        }
    }
}

impl ActiveConfig {
    pub fn budget(&self) -> LabelBudget {
        LabelBudget {
            initial: self.initial,
            max: self.max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Candidate batch count k.
    pub batches: usize,
    /// Rows per candidate batch.
    pub size: usize,
    /// When off, the first candidate batch is used without scoring.
    pub select: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            batches: 5,
            size: 500,
            select: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    pub kernel: KernelSpec,
    /// Diversity-score folds K.
    pub folds: usize,
    /// Regressor used inside the diversity score.
    pub regressor: RegressorSpec,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            folds: 5,
            regressor: RegressorSpec::kernel_ridge(),
        }
    }
}

fn default_downstream() -> Vec<RegressorSpec> {
    vec![RegressorSpec::kernel_ridge(), RegressorSpec::mlp(0)]
}

/// Everything one pipeline run needs. Loaded from TOML; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every phase seed is derived from it.
    pub seed: u64,
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub active: ActiveConfig,
    /// The `seed` field here is replaced by a derived seed at run time.
    pub gan: GanConfig,
    pub generation: GenerationConfig,
    pub quality: QualityConfig,
    #[serde(default = "default_downstream")]
    pub downstream: Vec<RegressorSpec>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSource::default(),
            split: SplitConfig::default(),
            active: ActiveConfig::default(),
            gan: GanConfig::default(),
            generation: GenerationConfig::default(),
            quality: QualityConfig::default(),
            downstream: default_downstream(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML config, or the `config` echo of a `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let echo = value.get("config").cloned().unwrap_or(value);
            let cfg: Self = serde_json::from_value(echo).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg.validate()?;
            return Ok(cfg);
        }
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.gan.validate()?;
        if self.generation.batches == 0 {
            return Err(Error::Config("generation.batches must be at least 1".into()));
        }
        if self.quality.folds < 2 {
            return Err(Error::Config("quality.folds must be at least 2".into()));
        }
        if self.downstream.is_empty() {
            return Err(Error::Config("at least one downstream regressor is required".into()));
        }
        for r in &self.downstream {
            r.validate()?;
        }
        self.quality.regressor.validate()?;
        self.quality.kernel.bandwidth.validate()?;
        if self.active.max < 2 {
            return Err(Error::Config("active.max must be at least 2".into()));
        }
        if let DatasetSource::Synthetic { noise_sd, .. } = &self.dataset {
            if !(*noise_sd >= 0.0) {
                return Err(Error::Config(format!("noise_sd must be >= 0, got {noise_sd}")));
            }
        }
        Ok(())
    }
}
