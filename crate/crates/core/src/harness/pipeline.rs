use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, ExperimentConfig};
use super::report::{ReportRow, ReportTable};
use crate::active::{run_active_selection, write_acquisition_csv, ActiveSelection};
use crate::data::{load_csv, split, synth_make, NormalizationSpec, Provenance, SplitSpec, TabularDataset};
use crate::numeric::{derive_seed, SeededRng};
use crate::quality::{select_best_batch, write_quality_csv, BatchQuality};
use crate::regress::{metrics_from, Metrics, RegressorFactory, RegressorSpec};
use crate::rgan::{generate, generate_like, load_checkpoint, save_checkpoint, train, GanConfig, RganModel, TrainTrace};
use crate::{Error, Result, TOOLKIT_VERSION};

/// Seed derivation: phase seed = `derive_seed(master, TAG, index)`.
pub mod seed_tags {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    /// index 0: active selection, index 1: uniform subset when active is off.
    pub const ACTIVE: u64 = 3;
    /// index = arm.
    pub const GAN: u64 = 4;
    /// index = candidate batch.
    pub const BATCH: u64 = 5;
    /// index = position in the downstream list.
    pub const DOWNSTREAM: u64 = 6;
    pub const FOLDS: u64 = 7;
}

use seed_tags as tags;

pub const REAL_ONLY: &str = "real-only";
pub const AUGMENTED: &str = "rgan-dde";

pub fn load_dataset(config: &ExperimentConfig) -> Result<TabularDataset> {
    match &config.dataset {
        DatasetSource::Synthetic { name, rows, noise_sd } => {
            synth_make(name, *rows, *noise_sd, derive_seed(config.seed, tags::DATA, 0))
        }
        DatasetSource::Csv { path, label } => load_csv(path, label),
    }
}

/// Data after splitting, training-row selection and normalization.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub case: String,
    pub pool: TabularDataset,
    pub test_raw: TabularDataset,
    pub selection: Option<ActiveSelection>,
    /// Pool rows used for training, in selection order.
    pub train_rows: Vec<usize>,
    pub train_raw: TabularDataset,
    /// Fitted on the training rows.
    pub norm: NormalizationSpec,
    pub train: TabularDataset,
    pub test: TabularDataset,
}

pub fn prepare(config: &ExperimentConfig, active: bool) -> Result<Prepared> {
    let data = load_dataset(config)?;
    let spec = SplitSpec {
        train: config.split.pool,
        test: config.split.test,
        seed: derive_seed(config.seed, tags::SPLIT, 0),
    };
    let (pool, test_raw) = split(&data, &spec)?;
    let budget = config.active.budget();
    budget.validate(pool.len())?;
    let (selection, train_rows) = if active {
        let scaled = NormalizationSpec::fit(&pool)?.apply_features(pool.features())?;
        let labels = pool.labels().to_vec();
        let sel = run_active_selection(
            &scaled,
            &mut |i| labels[i],
            &budget,
            derive_seed(config.seed, tags::ACTIVE, 0),
            &RegressorSpec::kernel_ridge(),
        )?;
        let rows = sel.order.clone();
        (Some(sel), rows)
    } else {
        let mut rng = SeededRng::new(derive_seed(config.seed, tags::ACTIVE, 1));
        let rows = rng.permutation(pool.len())[..budget.max].to_vec();
        (None, rows)
    };
    let train_raw = pool.select(&train_rows);
    let norm = NormalizationSpec::fit(&train_raw)?;
    let train = norm.apply(&train_raw)?;
    let test = norm.apply(&test_raw)?;
    Ok(Prepared {
        case: config.dataset.case_name(),
        pool,
        test_raw,
        selection,
        train_rows,
        train_raw,
        norm,
        train,
        test,
    })
}

/// GAN config with the arm's derived seed.
pub fn gan_config(config: &ExperimentConfig, arm: u64) -> GanConfig {
    GanConfig {
        seed: derive_seed(config.seed, tags::GAN, arm),
        ..config.gan.clone()
    }
}

/// `k` candidate batches of `size` rows, normalized space.
pub fn candidate_batches(
    config: &ExperimentConfig,
    model: &RganModel,
    like: &TabularDataset,
    size: usize,
) -> Result<Vec<TabularDataset>> {
    (0..config.generation.batches as u64)
        .map(|i| generate_like(model, size, derive_seed(config.seed, tags::BATCH, i), like))
        .collect()
}

/// Picks the batch to augment with. Scores are empty when selection is off
/// or the batches are empty.
pub fn choose_batch(
    config: &ExperimentConfig,
    select: bool,
    train: &TabularDataset,
    batches: &[TabularDataset],
) -> Result<(usize, Vec<BatchQuality>)> {
    if !select || batches.is_empty() || batches[0].is_empty() {
        return Ok((0, Vec::new()));
    }
    select_best_batch(
        train,
        batches,
        &config.quality.kernel,
        config.quality.folds,
        &config.quality.regressor,
        derive_seed(config.seed, tags::FOLDS, 0),
    )
}

/// Fits each downstream regressor on `train` (normalized) and reports
/// test metrics in original label units.
pub fn evaluate_downstream(
    config: &ExperimentConfig,
    prepared: &Prepared,
    train: &TabularDataset,
) -> Result<Vec<(String, Metrics)>> {
    config
        .downstream
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let spec = spec.with_seed(derive_seed(config.seed, tags::DOWNSTREAM, j as u64));
            let model = spec.fit(train)?;
            let predicted: Vec<f64> = model
                .predict(prepared.test.features())?
                .into_iter()
                .map(|v| prepared.norm.label.invert(v))
                .collect();
            Ok((spec.label().to_string(), metrics_from(&predicted, prepared.test_raw.labels())?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub regressor: String,
    /// `real-only` or `rgan-dde`.
    pub condition: String,
    pub mae: f64,
    pub rmse: f64,
}

/// Everything a run produced. The config echo carries the master seed, so
/// rerunning it reproduces every numeric output.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub arm: u64,
    pub case: String,
    /// Pool rows used for training.
    pub train_rows: Vec<usize>,
    pub selection: Option<ActiveSelection>,
    pub trace: TrainTrace,
    pub quality: Vec<BatchQuality>,
    pub selected_batch: Option<usize>,
    pub downstream: Vec<DownstreamResult>,
    /// Seconds per phase.
    pub phase_secs: BTreeMap<String, f64>,
    /// Set when a phase failed; later fields are then incomplete.
    pub error: Option<String>,
}

impl RunManifest {
    pub fn report(&self) -> ReportTable {
        ReportTable {
            rows: self
                .downstream
                .iter()
                .map(|d| {
                    ReportRow::ok(
                        &d.condition,
                        &self.case,
                        &d.regressor,
                        Metrics { mae: d.mae, rmse: d.rmse },
                    )
                })
                .collect(),
        }
    }

    pub fn augmented_rows(&self) -> impl Iterator<Item = &DownstreamResult> {
        self.downstream.iter().filter(|d| d.condition == AUGMENTED)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.into(), detail: e.to_string() })
    }
}

/// Pipeline switches used by the ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Switches {
    pub active: bool,
    pub select: bool,
    pub arm: u64,
}

impl Switches {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        Self {
            active: config.active.enabled,
            select: config.generation.select,
            arm: 0,
        }
    }
}

fn timed<T>(phases: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    phases.insert(name.into(), start.elapsed().as_secs_f64());
    out
}

/// Last phase a run executes. Later phases are skipped and their outputs
/// stay empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Select,
    Train,
    Score,
    Downstream,
}

struct Artifacts {
    model: Option<RganModel>,
    norm: Option<NormalizationSpec>,
    names: Option<(Vec<String>, String)>,
}

fn run_phases(
    config: &ExperimentConfig,
    switches: Switches,
    last: Phase,
    pretrained: Option<RganModel>,
    manifest: &mut RunManifest,
    artifacts: &mut Artifacts,
) -> Result<()> {
    let mut phases = BTreeMap::new();
    let result = (|| {
        let prepared = timed(&mut phases, "select", || prepare(config, switches.active))?;
        manifest.case = prepared.case.clone();
        manifest.train_rows = prepared.train_rows.clone();
        manifest.selection = prepared.selection.clone();
        artifacts.norm = Some(prepared.norm.clone());
        artifacts.names = Some((
            prepared.train.feature_names().to_vec(),
            prepared.train.label_name().to_string(),
        ));
        if last == Phase::Select {
            return Ok(());
        }

        let model = match pretrained {
            Some(model) => {
                if model.feature_dim() != prepared.train.dim() {
                    return Err(Error::Checkpoint(format!(
                        "checkpoint is for {} features, data has {}",
                        model.feature_dim(),
                        prepared.train.dim()
                    )));
                }
                model
            }
            None => {
                let gan_cfg = gan_config(config, switches.arm);
                let (model, trace) = timed(&mut phases, "train", || train(&prepared.train, &gan_cfg))?;
                manifest.trace = trace;
                artifacts.model = Some(model.clone());
                model
            }
        };
        if last == Phase::Train {
            return Ok(());
        }

        let batches = timed(&mut phases, "generate", || {
            candidate_batches(config, &model, &prepared.train, config.generation.size)
        })?;
        let (best, quality) = timed(&mut phases, "score", || {
            choose_batch(config, switches.select, &prepared.train, &batches)
        })?;
        manifest.quality = quality;
        manifest.selected_batch = Some(best);
        if last == Phase::Score {
            return Ok(());
        }

        timed(&mut phases, "downstream", || {
            let augmented = prepared.train.concat(&batches[best])?;
            for (condition, train) in [(REAL_ONLY, &prepared.train), (AUGMENTED, &augmented)] {
                for (regressor, m) in evaluate_downstream(config, &prepared, train)? {
                    manifest.downstream.push(DownstreamResult {
                        regressor,
                        condition: condition.into(),
                        mae: m.mae,
                        rmse: m.rmse,
                    });
                }
            }
            Ok(())
        })
    })();
    manifest.phase_secs = phases;
    result
}

/// Output file names inside a run directory.
pub mod files {
    pub const MANIFEST: &str = "manifest.json";
    pub const TRACE: &str = "trace.csv";
    pub const QUALITY: &str = "quality.csv";
    pub const REPORT: &str = "report.csv";
    pub const ACQUISITION: &str = "acquisition.csv";
    pub const CHECKPOINT: &str = "model.ckpt";
    pub const TIMING: &str = "timing.csv";
    pub const CONVERGENCE: &str = "convergence.csv";
}

/// Checkpoint extras: everything needed to map generated rows back to raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointExtra {
    pub normalization: NormalizationSpec,
    pub feature_names: Vec<String>,
    pub label_name: String,
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_outputs(
    dir: &Path,
    last: Phase,
    manifest: &RunManifest,
    artifacts: &Artifacts,
    config: &ExperimentConfig,
    arm: u64,
) -> Result<()> {
    ensure_dir(dir)?;
    manifest.write_json(dir.join(files::MANIFEST))?;
    if last >= Phase::Train {
        manifest.trace.write_csv(dir.join(files::TRACE))?;
    }
    if last >= Phase::Score {
        write_quality_csv(&manifest.quality, dir.join(files::QUALITY))?;
    }
    if last >= Phase::Downstream {
        manifest.report().write_csv(dir.join(files::REPORT))?;
    }
    if let Some(sel) = &manifest.selection {
        write_acquisition_csv(&sel.log, dir.join(files::ACQUISITION))?;
    }
    if let (Some(model), Some(norm), Some((names, label))) = (&artifacts.model, &artifacts.norm, &artifacts.names) {
        let extra = CheckpointExtra {
            normalization: norm.clone(),
            feature_names: names.clone(),
            label_name: label.clone(),
        };
        let extra = serde_json::to_value(extra).map_err(|e| Error::Checkpoint(e.to_string()))?;
        save_checkpoint(dir.join(files::CHECKPOINT), model, &gan_config(config, arm), extra)?;
    }
    Ok(())
}

/// Runs phases up to `last` with explicit switches; writes outputs to `out`
/// when given. A `pretrained` model replaces the training phase. On failure
/// the partial manifest (with its error record) is still written.
pub fn run_until(
    config: &ExperimentConfig,
    switches: Switches,
    last: Phase,
    pretrained: Option<RganModel>,
    out: Option<&Path>,
) -> Result<RunManifest> {
    config.validate()?;
    let mut manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config.clone(),
        arm: switches.arm,
        ..Default::default()
    };
    let mut artifacts = Artifacts { model: None, norm: None, names: None };
    let result = run_phases(config, switches, last, pretrained, &mut manifest, &mut artifacts);
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
        if let Error::Divergence { trace: Some(t), .. } = e {
            manifest.trace = (**t).clone();
        }
    }
    if let Some(dir) = out {
        write_outputs(dir, last, &manifest, &artifacts, config, switches.arm)?;
    }
    result.map(|()| manifest)
}

/// Every phase with explicit switches.
pub fn run_pipeline_with(config: &ExperimentConfig, switches: Switches, out: Option<&Path>) -> Result<RunManifest> {
    run_until(config, switches, Phase::Downstream, None, out)
}

/// Full pipeline under the config's own switches, writing to `out_dir` if set.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunManifest> {
    let out: Option<PathBuf> = config.out_dir.clone();
    run_pipeline_with(config, Switches::from_config(config), out.as_deref())
}

/// Generates `n` rows from a checkpoint written by a run, mapped back to the
/// original units and column names.
pub fn generate_from_checkpoint(path: impl AsRef<Path>, n: usize, seed: u64) -> Result<TabularDataset> {
    let ckpt = load_checkpoint(path, None)?;
    let extra: CheckpointExtra = serde_json::from_value(ckpt.extra)
        .map_err(|e| Error::Checkpoint(format!("missing normalization metadata: {e}")))?;
    let rows = generate(&ckpt.model, n, seed)?;
    let named = TabularDataset::new(
        rows.features().clone(),
        rows.labels().to_vec(),
        extra.feature_names,
        extra.label_name,
        Provenance::Generated,
    )?;
    extra.normalization.invert(&named)
}
