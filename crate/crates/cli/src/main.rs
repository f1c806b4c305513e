//! `tabaug`: runs the augmentation pipeline and its studies from a TOML config.
//!
//! Exit codes: 0 success, 2 config or usage error, 3 data or I/O error,
//! 4 numeric divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tabaug_core::data::write_csv;
use tabaug_core::harness::{
    files, generate_from_checkpoint, run_ablation, run_until, sweep_amount, sweep_hyper, time_variants,
    ExperimentConfig, HyperGrid, HyperParam, Phase, ReportTable, RunManifest, Switches, DEFAULT_AMOUNTS,
};
use tabaug_core::rgan::load_checkpoint;
use tabaug_core::{Error, Result};

const DEFAULT_OUT: &str = "tabaug-out";

#[derive(Parser)]
#[command(name = "tabaug", version, about = "Regression-aware GAN augmentation for small tabular datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run. Defaults apply when absent.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Concurrent arms for ablations and sweeps.
    #[arg(long, value_name = "N", default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Active selection of training rows only.
    Select(Common),
    /// Selection and GAN training; writes the checkpoint and trace.
    Train(Common),
    /// Samples rows from a checkpoint in original units.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Number of rows.
        #[arg(long, default_value_t = 500)]
        n: usize,
    },
    /// Candidate batch scoring; trains a GAN unless a checkpoint is given.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// The end-to-end pipeline.
    Pipeline(Common),
    /// The five ablation variants.
    Ablate(Common),
    /// Downstream error against the amount of generated data.
    SweepAmount {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
        amounts: Option<Vec<usize>>,
    },
    /// One-at-a-time sweep of the three loss weights.
    SweepHyper {
        #[command(flatten)]
        common: Common,
        /// Values tried for each weight.
        #[arg(long, value_delimiter = ',', value_name = "V,V,...")]
        values: Option<Vec<f64>>,
    },
    /// Training wall-clock of WGAN-GP mode against the full method.
    Time(Common),
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.out_dir = Some(self.out_dir(&cfg));
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| DEFAULT_OUT.into())
    }
}

fn print_report(table: &ReportTable) {
    println!("{:<26} {:<10} {:<28} {:>12} {:>12}  status", "variant", "setting", "regressor", "mae", "rmse");
    for r in &table.rows {
        let setting = if r.parameter.is_empty() { String::new() } else { format!("{}={}", r.parameter, r.value) };
        println!(
            "{:<26} {:<10} {:<28} {:>12.6} {:>12.6}  {}",
            r.variant, setting, r.regressor, r.mae, r.rmse, r.status
        );
    }
}

fn phase_run(common: &Common, last: Phase, checkpoint: Option<&Path>) -> Result<RunManifest> {
    let cfg = common.load()?;
    let pretrained = checkpoint.map(|p| load_checkpoint(p, None)).transpose()?.map(|c| c.model);
    let out = cfg.out_dir.clone().expect("set by load");
    let manifest = run_until(&cfg, Switches::from_config(&cfg), last, pretrained, Some(&out))?;
    println!("wrote {}", out.display());
    Ok(manifest)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Select(common) => {
            let cfg = common.load()?;
            let out = cfg.out_dir.clone().expect("set by load");
            // Always active learning, whatever the config says.
            let switches = Switches { active: true, ..Switches::from_config(&cfg) };
            let m = run_until(&cfg, switches, Phase::Select, None, Some(&out))?;
            println!("selected {} pool rows: {:?}", m.train_rows.len(), m.train_rows);
        }
        Command::Train(common) => {
            let m = phase_run(&common, Phase::Train, None)?;
            if let Some(last) = m.trace.records.last() {
                println!("iteration {}: wasserstein {:.6}", last.iteration, last.wasserstein);
            }
        }
        Command::Generate { common, checkpoint, n } => {
            let cfg = common.load()?;
            let rows = generate_from_checkpoint(&checkpoint, n, cfg.seed)?;
            let dir = cfg.out_dir.expect("set by load");
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            let path = dir.join("generated.csv");
            write_csv(&rows, &path)?;
            println!("wrote {n} rows to {}", path.display());
        }
        Command::Score { common, checkpoint } => {
            let m = phase_run(&common, Phase::Score, checkpoint.as_deref())?;
            for q in &m.quality {
                println!(
                    "batch {}: mmd2 {:.6} ds {:.6} combined {:.4}{}",
                    q.batch,
                    q.mmd2,
                    q.ds,
                    q.combined,
                    if q.selected { "  <- selected" } else { "" }
                );
            }
        }
        Command::Pipeline(common) => {
            let m = phase_run(&common, Phase::Downstream, None)?;
            print_report(&m.report());
        }
        Command::Ablate(common) => {
            let cfg = common.load()?;
            print_report(&run_ablation(&cfg, cfg.out_dir.as_deref(), common.workers)?);
        }
        Command::SweepAmount { common, amounts } => {
            let cfg = common.load()?;
            let amounts = amounts.unwrap_or_else(|| DEFAULT_AMOUNTS.to_vec());
            print_report(&sweep_amount(&cfg, &amounts, cfg.out_dir.as_deref(), common.workers)?);
        }
        Command::SweepHyper { common, values } => {
            let cfg = common.load()?;
            let grid = match values {
                None => HyperGrid::default(),
                Some(values) => HyperGrid {
                    points: [HyperParam::Alpha, HyperParam::Beta, HyperParam::Gamma]
                        .into_iter()
                        .flat_map(|p| values.iter().map(move |&v| (p, v)))
                        .collect(),
                },
            };
            print_report(&sweep_hyper(&cfg, &grid, cfg.out_dir.as_deref(), common.workers)?);
        }
        Command::Time(common) => {
            let cfg = common.load()?;
            let study = time_variants(&cfg, cfg.out_dir.as_deref())?;
            for r in &study.rows {
                println!("{:<10} {:>8} iterations {:>10.3} s  ratio {:.3}", r.variant, r.iterations, r.seconds, r.ratio_to_wgan_gp);
            }
            println!("convergence trace: {}", cfg.out_dir.expect("set by load").join(files::CONVERGENCE).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
