use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{
    candidate_batches, choose_batch, ensure_dir, evaluate_downstream, files, gan_config, prepare,
    run_pipeline_with, Switches, AUGMENTED, REAL_ONLY,
};
use super::report::{write_timing_csv, ReportRow, ReportTable, TimingRow};
use crate::rgan::{train, TrainTrace};
use crate::{Error, Result};

/// Runs `jobs` on at most `workers` threads, keeping input order.
fn run_parallel<T: Send, R: Send>(workers: usize, jobs: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Result<Vec<R>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| jobs.into_par_iter().map(f).collect()))
}

fn arm_dir(out: Option<&Path>, name: &str) -> Option<PathBuf> {
    let slug: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    out.map(|d| d.join(slug.trim_matches('-')))
}

fn failure_rows(config: &ExperimentConfig, variant: &str, err: &Error) -> Vec<ReportRow> {
    let status = match err {
        Error::Divergence { .. } => format!("diverged: {err}"),
        _ => format!("failed: {err}"),
    };
    config
        .downstream
        .iter()
        .map(|r| ReportRow::failed(variant, &config.dataset.case_name(), r.label(), status.clone()))
        .collect()
}

fn finish(table: ReportTable, out: Option<&Path>) -> Result<ReportTable> {
    if let Some(dir) = out {
        ensure_dir(dir)?;
        table.write_csv(dir.join(files::REPORT))?;
    }
    Ok(table)
}

/// One ablation arm: its report name, config edits and pipeline switches.
#[derive(Clone, Debug)]
pub struct AblationVariant {
    pub name: &'static str,
    pub share_trunk: bool,
    pub active: bool,
    pub select: bool,
}

pub const ABLATION_VARIANTS: [AblationVariant; 5] = [
    AblationVariant { name: "rgan-dde", share_trunk: true, active: true, select: true },
    AblationVariant { name: "w/o shallow sharing", share_trunk: false, active: true, select: true },
    AblationVariant { name: "w/o dual data evaluation", share_trunk: true, active: false, select: false },
    AblationVariant { name: "w/o dde(train)", share_trunk: true, active: false, select: true },
    AblationVariant { name: "w/o dde(generated)", share_trunk: true, active: true, select: false },
];

/// Five ablation arms, one augmented row per arm and downstream regressor.
/// Arms share the data split and the training-row draw; arm `i` trains its
/// GAN under GAN seed index `i`. A failing arm yields flagged rows.
pub fn run_ablation(config: &ExperimentConfig, out: Option<&Path>, workers: usize) -> Result<ReportTable> {
    config.validate()?;
    let jobs: Vec<(u64, &AblationVariant)> = (0u64..).zip(ABLATION_VARIANTS.iter()).collect();
    let per_arm = run_parallel(workers, jobs, |(arm, v)| {
        let mut cfg = config.clone();
        cfg.gan.share_trunk = v.share_trunk;
        let switches = Switches { active: v.active, select: v.select, arm };
        let dir = arm_dir(out, v.name);
        match run_pipeline_with(&cfg, switches, dir.as_deref()) {
            Ok(m) => m
                .augmented_rows()
                .map(|d| ReportRow::ok(v.name, &m.case, &d.regressor, crate::regress::Metrics { mae: d.mae, rmse: d.rmse }))
                .collect::<Vec<_>>(),
            Err(e) => failure_rows(config, v.name, &e),
        }
    })?;
    finish(ReportTable { rows: per_arm.into_iter().flatten().collect() }, out)
}

pub const DEFAULT_AMOUNTS: [usize; 6] = [100, 200, 300, 400, 500, 1000];

/// Trains one GAN, generates the candidate batches at the largest amount,
/// picks the best, and evaluates every amount on a prefix of it. Because
/// generation is prefix-stable, the prefix equals a direct draw of that size.
/// Amount 0 reproduces the real-only baseline.
pub fn sweep_amount(
    config: &ExperimentConfig,
    amounts: &[usize],
    out: Option<&Path>,
    workers: usize,
) -> Result<ReportTable> {
    config.validate()?;
    let Some(&largest) = amounts.iter().max() else {
        return Err(Error::Config("amount sweep needs at least one amount".into()));
    };
    let prepared = prepare(config, config.active.enabled)?;
    let (model, trace) = train(&prepared.train, &gan_config(config, 0))?;
    let batches = candidate_batches(config, &model, &prepared.train, largest)?;
    let (best, quality) = choose_batch(config, config.generation.select, &prepared.train, &batches)?;
    if let Some(dir) = out {
        ensure_dir(dir)?;
        trace.write_csv(dir.join(files::TRACE))?;
        crate::quality::write_quality_csv(&quality, dir.join(files::QUALITY))?;
    }
    let chosen = &batches[best];
    let per_amount = run_parallel(workers, amounts.to_vec(), |amount| {
        let prefix: Vec<usize> = (0..amount).collect();
        let run = prepared
            .train
            .concat(&chosen.select(&prefix))
            .and_then(|augmented| evaluate_downstream(config, &prepared, &augmented));
        match run {
            Ok(results) => results
                .into_iter()
                .map(|(reg, m)| ReportRow::ok(AUGMENTED, &prepared.case, &reg, m).with_setting("amount", amount))
                .collect::<Vec<_>>(),
            Err(e) => failure_rows(config, AUGMENTED, &e)
                .into_iter()
                .map(|r| r.with_setting("amount", amount))
                .collect(),
        }
    })?;
    finish(ReportTable { rows: per_amount.into_iter().flatten().collect() }, out)
}

/// The weight varied by a hyperparameter sweep point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperParam {
    /// Generator regression weight.
    Alpha,
    /// Gradient-penalty weight.
    Beta,
    /// Critic regression weight.
    Gamma,
}

impl HyperParam {
    pub fn name(self) -> &'static str {
        match self {
            HyperParam::Alpha => "alpha",
            HyperParam::Beta => "beta",
            HyperParam::Gamma => "gamma",
        }
    }

    fn set(self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            HyperParam::Alpha => cfg.gan.generator_reg_weight = value,
            HyperParam::Beta => cfg.gan.gp_weight = value,
            HyperParam::Gamma => cfg.gan.critic_reg_weight = value,
        }
    }
}

pub const DEFAULT_HYPER_VALUES: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// One-at-a-time grid: each point sets one weight, the other two sit at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrid {
    pub points: Vec<(HyperParam, f64)>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        let points = [HyperParam::Alpha, HyperParam::Beta, HyperParam::Gamma]
            .into_iter()
            .flat_map(|p| DEFAULT_HYPER_VALUES.map(|v| (p, v)))
            .collect();
        Self { points }
    }
}

impl HyperGrid {
    /// The config a sweep point runs under.
    pub fn point_config(config: &ExperimentConfig, param: HyperParam, value: f64) -> ExperimentConfig {
        let mut cfg = config.clone();
        cfg.gan.generator_reg_weight = 1.0;
        cfg.gan.gp_weight = 1.0;
        cfg.gan.critic_reg_weight = 1.0;
        param.set(&mut cfg, value);
        cfg
    }
}

/// Runs the full pipeline once per grid point. Every point uses GAN seed
/// index 0, so a point matches a direct pipeline run of its config.
pub fn sweep_hyper(config: &ExperimentConfig, grid: &HyperGrid, out: Option<&Path>, workers: usize) -> Result<ReportTable> {
    config.validate()?;
    if grid.points.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let per_point = run_parallel(workers, grid.points.clone(), |(param, value)| {
        let cfg = HyperGrid::point_config(config, param, value);
        let dir = arm_dir(out, &format!("{}-{value}", param.name()));
        let rows: Vec<ReportRow> = match run_pipeline_with(&cfg, Switches::from_config(&cfg), dir.as_deref()) {
            Ok(m) => m
                .augmented_rows()
                .map(|d| ReportRow::ok(AUGMENTED, &m.case, &d.regressor, crate::regress::Metrics { mae: d.mae, rmse: d.rmse }))
                .collect(),
            Err(e) => failure_rows(config, AUGMENTED, &e),
        };
        rows.into_iter().map(|r| r.with_setting(param.name(), value)).collect::<Vec<_>>()
    })?;
    finish(ReportTable { rows: per_point.into_iter().flatten().collect() }, out)
}

pub const WGAN_GP: &str = "wgan-gp";

/// Training wall-clock and traces of the WGAN-GP mode and the full method.
#[derive(Clone, Debug)]
pub struct TimingStudy {
    pub rows: Vec<TimingRow>,
    pub traces: Vec<(String, TrainTrace)>,
}

#[derive(Serialize)]
struct ConvergenceRow<'a> {
    variant: &'a str,
    iteration: usize,
    wasserstein: f64,
}

pub const CONVERGENCE_HEADER: [&str; 3] = ["variant", "iteration", "wasserstein"];

impl TimingStudy {
    pub fn write_convergence_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<ConvergenceRow> = self
            .traces
            .iter()
            .flat_map(|(v, t)| {
                t.records.iter().map(move |r| ConvergenceRow {
                    variant: v,
                    iteration: r.iteration,
                    wasserstein: r.wasserstein,
                })
            })
            .collect();
        crate::data::write_records(path.as_ref(), &[], &CONVERGENCE_HEADER, &rows)
    }
}

/// Trains both variants on the same training rows and GAN seed, one after
/// the other so they do not compete for cores. Seconds include pretraining.
pub fn time_variants(config: &ExperimentConfig, out: Option<&Path>) -> Result<TimingStudy> {
    config.validate()?;
    let prepared = prepare(config, config.active.enabled)?;
    let full = gan_config(config, 0);
    let baseline = full.wgan_gp();
    let mut measured = Vec::new();
    for (name, cfg) in [(WGAN_GP, &baseline), (AUGMENTED, &full)] {
        let start = Instant::now();
        let (_, trace) = train(&prepared.train, cfg)?;
        measured.push((name, cfg.iterations, start.elapsed().as_secs_f64(), trace));
    }
    let base_secs = measured[0].2;
    let study = TimingStudy {
        rows: measured
            .iter()
            .map(|(name, iterations, secs, _)| TimingRow {
                variant: name.to_string(),
                iterations: *iterations,
                seconds: *secs,
                ratio_to_wgan_gp: secs / base_secs,
            })
            .collect(),
        traces: measured.into_iter().map(|(n, _, _, t)| (n.to_string(), t)).collect(),
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_timing_csv(&study.rows, dir.join(files::TIMING))?;
        study.write_convergence_csv(dir.join(files::CONVERGENCE))?;
    }
    Ok(study)
}

/// Real-only rows of a run, for tables that want the baseline alongside.
pub fn real_only_rows(manifest: &super::pipeline::RunManifest) -> Vec<ReportRow> {
    manifest.report().rows.into_iter().filter(|r| r.variant == REAL_ONLY).collect()
}
