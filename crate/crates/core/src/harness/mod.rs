//! Experiment orchestration: the end-to-end pipeline, the ablation,
//! sample-amount, hyperparameter and timing studies, and their CSV reports.

mod config;
mod pipeline;
mod report;
mod studies;

pub use config::{ActiveConfig, DatasetSource, ExperimentConfig, GenerationConfig, QualityConfig, SplitConfig};
pub use pipeline::{
    candidate_batches, choose_batch, evaluate_downstream, files, gan_config, load_dataset, prepare,
    generate_from_checkpoint, run_pipeline, run_pipeline_with, run_until, seed_tags, Phase, CheckpointExtra, DownstreamResult, Prepared, RunManifest,
    Switches, AUGMENTED, REAL_ONLY,
};
pub use report::{write_timing_csv, ReportRow, ReportTable, TimingRow, REPORT_HEADER, TIMING_HEADER};
pub use studies::{
    real_only_rows, run_ablation, sweep_amount, sweep_hyper, time_variants, AblationVariant, HyperGrid,
    HyperParam, TimingStudy, ABLATION_VARIANTS, CONVERGENCE_HEADER, DEFAULT_AMOUNTS, DEFAULT_HYPER_VALUES,
    WGAN_GP,
};
