use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{critic_regressor_loss, generator_loss, CriticBatch, GanConfig, GeneratorBatch, RganModel};
use crate::data::{Provenance, TabularDataset};
use crate::numeric::{
    derive_seed, gaussian_noise, grad_wrt_params, AdamConfig, AdamState, BoundMlp, DiffGraph,
    Matrix, MlpParams, Parameters, SeededRng,
};
use crate::{Error, Result};

const PRETRAIN_TAG: u64 = 0x7072_6574;
const TRAIN_TAG: u64 = 0x7472_6169;

/// One generator iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Last critic/regressor loss of the iteration.
    pub critic_loss: f64,
    pub generator_loss: f64,
    /// Unweighted regression loss at the last critic step.
    pub regression_loss: f64,
    /// `mean D(real) − mean D(fake)` at the last critic step.
    pub wasserstein: f64,
    /// Seconds since adversarial training started.
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Regressor MSE on the training set before pretraining.
    pub pretrain_initial_mse: Option<f64>,
    /// Regressor MSE on the training set after each pretraining epoch.
    pub pretrain_mse: Vec<f64>,
    pub pretrain_secs: f64,
    pub records: Vec<TraceRecord>,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    critic_loss: f64,
    generator_loss: f64,
    regression_loss: f64,
    wasserstein: f64,
}

pub const TRACE_HEADER: [&str; 5] =
    ["iteration", "critic_loss", "generator_loss", "regression_loss", "wasserstein"];

impl TrainTrace {
    /// Mean `|Wasserstein estimate|` over records `[start, end)`.
    pub fn mean_abs_wasserstein(&self, start: usize, end: usize) -> f64 {
        let window = &self.records[start.min(end)..end.min(self.records.len())];
        window.iter().map(|r| r.wasserstein.abs()).sum::<f64>() / window.len().max(1) as f64
    }

    /// Population variance of the Wasserstein estimate over records `[start, end)`.
    pub fn wasserstein_variance(&self, start: usize, end: usize) -> f64 {
        let window = &self.records[start.min(end)..end.min(self.records.len())];
        let n = window.len().max(1) as f64;
        let mean = window.iter().map(|r| r.wasserstein).sum::<f64>() / n;
        window.iter().map(|r| (r.wasserstein - mean).powi(2)).sum::<f64>() / n
    }

    /// Trace CSV without wall-clock columns, so reruns are byte-identical.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<TraceRow> = self
            .records
            .iter()
            .map(|r| TraceRow {
                iteration: r.iteration,
                critic_loss: r.critic_loss,
                generator_loss: r.generator_loss,
                regression_loss: r.regression_loss,
                wasserstein: r.wasserstein,
            })
            .collect();
        crate::data::write_records(path.as_ref(), &[], &TRACE_HEADER, &rows)
    }
}

fn divergence(stage: &str, step: usize, detail: impl Into<String>, trace: Option<&TrainTrace>) -> Error {
    Error::Divergence {
        stage: stage.into(),
        step,
        detail: detail.into(),
        trace: trace.map(|t| Box::new(t.clone())),
    }
}

fn regression_nets(model: &mut RganModel) -> (&mut MlpParams, &mut MlpParams) {
    let trunk = match model.regressor_trunk.as_mut() {
        Some(t) => t,
        None => &mut model.critic_trunk,
    };
    (trunk, &mut model.regressor_head)
}

fn mse(model: &RganModel, ds: &TabularDataset) -> Result<f64> {
    let p = model.predict(ds.features())?;
    Ok(p.iter().zip(ds.labels()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ds.len() as f64)
}

/// Trains the regression trunk and head on real rows by minibatch MSE.
/// The head's output bias is first shifted so the mean prediction equals the
/// mean label. Returns the training MSE before and after each epoch.
pub fn pretrain_regressor(
    model: &mut RganModel,
    train: &TabularDataset,
    config: &GanConfig,
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Contract("pretraining needs at least one row".into()));
    }
    let initial = mse(model, train)?;
    let mut per_epoch = Vec::with_capacity(config.pretrain_epochs);
    if config.pretrain_epochs == 0 {
        return Ok((initial, per_epoch));
    }
    let offset = {
        let p = model.predict(train.features())?;
        (train.labels().iter().sum::<f64>() - p.iter().sum::<f64>()) / train.len() as f64
    };
    let head_layers = model.regressor_head.tensors_mut();
    let out_bias = head_layers.into_iter().last().expect("head has a bias");
    out_bias.as_mut_slice()[0] += offset;

    let mut rng = SeededRng::new(derive_seed(config.seed, PRETRAIN_TAG, 0));
    let adam_cfg = AdamConfig::with_learning_rate(config.pretrain_learning_rate);
    let (mut trunk_opt, mut head_opt) = {
        let (t, h) = regression_nets(model);
        (AdamState::new(adam_cfg, &t.tensors()), AdamState::new(adam_cfg, &h.tensors()))
    };
    let joint = train.joint();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..config.pretrain_epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch) {
            let mut g = DiffGraph::new();
            let bound = model.bind(&mut g);
            let rows = g.leaf(joint.select_rows(chunk));
            let loss = bound.regression_mse(&mut g, rows)?;
            if !g.value(loss).item().is_finite() {
                return Err(divergence("pretrain", epoch, "non-finite regression loss", None));
            }
            let trunk = bound.regressor_trunk.as_ref().unwrap_or(&bound.critic_trunk);
            let mut grads = grad_wrt_params(&mut g, loss, &[trunk, &bound.regressor_head])?;
            let head_grads = grads.pop().expect("two nets");
            let trunk_grads = grads.pop().expect("two nets");
            let (t, h) = regression_nets(model);
            trunk_opt.step(&mut t.tensors_mut(), &trunk_grads)?;
            head_opt.step(&mut h.tensors_mut(), &head_grads)?;
        }
        let m = mse(model, train)?;
        if !m.is_finite() {
            return Err(divergence("pretrain", epoch, "non-finite training MSE", None));
        }
        per_epoch.push(m);
    }
    Ok((initial, per_epoch))
}

/// Networks updated by the critic step, in the order their optimizers hold them.
#[derive(Clone, Copy, PartialEq, Eq)]
enum CriticSide {
    Trunk,
    Head,
    RegressorHead,
}

fn critic_side(config: &GanConfig) -> Vec<CriticSide> {
    let mut v = vec![CriticSide::Trunk, CriticSide::Head];
    if config.share_trunk && config.critic_regression {
        v.push(CriticSide::RegressorHead);
    }
    v
}

fn net_mut(model: &mut RganModel, which: CriticSide) -> &mut MlpParams {
    match which {
        CriticSide::Trunk => &mut model.critic_trunk,
        CriticSide::Head => &mut model.critic_head,
        CriticSide::RegressorHead => &mut model.regressor_head,
    }
}

fn net_ref(model: &RganModel, which: CriticSide) -> &MlpParams {
    match which {
        CriticSide::Trunk => &model.critic_trunk,
        CriticSide::Head => &model.critic_head,
        CriticSide::RegressorHead => &model.regressor_head,
    }
}

fn bound_ref(bound: &super::BoundModel, which: CriticSide) -> &BoundMlp {
    match which {
        CriticSide::Trunk => &bound.critic_trunk,
        CriticSide::Head => &bound.critic_head,
        CriticSide::RegressorHead => &bound.regressor_head,
    }
}

/// Sampler for joint training rows, drawn uniformly with replacement.
struct Sampler<'a> {
    joint: &'a Matrix,
    rng: SeededRng,
}

impl Sampler<'_> {
    fn real(&mut self, n: usize) -> Matrix {
        let idx: Vec<usize> = (0..n).map(|_| self.rng.index(self.joint.rows())).collect();
        self.joint.select_rows(&idx)
    }

    fn noise(&mut self, n: usize, dim: usize) -> Matrix {
        gaussian_noise(n, dim, &mut self.rng)
    }
}

/// One critic/regressor update; returns (loss, regression loss, Wasserstein estimate).
fn critic_step(
    model: &mut RganModel,
    opts: &mut [AdamState],
    sides: &[CriticSide],
    batch: &CriticBatch,
    config: &GanConfig,
) -> Result<(f64, f64, f64)> {
    let mut g = DiffGraph::new();
    let bound = model.bind(&mut g);
    let terms = critic_regressor_loss(&mut g, &bound, batch, config)?;
    let loss = g.value(terms.loss).item();
    if !loss.is_finite() {
        return Err(divergence("critic", 0, "non-finite critic loss", None));
    }
    let nets: Vec<&BoundMlp> = sides.iter().map(|&s| bound_ref(&bound, s)).collect();
    let grads = grad_wrt_params(&mut g, terms.loss, &nets)?;
    for ((opt, &side), grad) in opts.iter_mut().zip(sides).zip(&grads) {
        opt.step(&mut net_mut(model, side).tensors_mut(), grad)?;
    }
    Ok((
        loss,
        g.value(terms.regression).item(),
        g.value(terms.wasserstein).item(),
    ))
}

fn generator_step(
    model: &mut RganModel,
    opt: &mut AdamState,
    batch: &GeneratorBatch,
    config: &GanConfig,
) -> Result<f64> {
    let mut g = DiffGraph::new();
    let bound = model.bind(&mut g);
    let terms = generator_loss(&mut g, &bound, batch, config)?;
    let loss = g.value(terms.loss).item();
    if !loss.is_finite() {
        return Err(divergence("generator", 0, "non-finite generator loss", None));
    }
    let grads = grad_wrt_params(&mut g, terms.loss, &[&bound.generator])?;
    opt.step(&mut model.generator.tensors_mut(), &grads[0])?;
    Ok(loss)
}

/// Pretrains the regressor (except in WGAN-GP mode), then alternates `n_critic` critic/regressor
/// updates with one generator update for `iterations` rounds.
pub fn train(train: &TabularDataset, config: &GanConfig) -> Result<(RganModel, TrainTrace)> {
    config.validate()?;
    let model = RganModel::new(train.dim(), config);
    train_from(model, train, config)
}

/// [`train`] starting from given initial networks.
pub fn train_from(
    mut model: RganModel,
    train: &TabularDataset,
    config: &GanConfig,
) -> Result<(RganModel, TrainTrace)> {
    config.validate()?;
    if model.feature_dim() != train.dim() || model.noise_dim() != config.noise_dim {
        return Err(Error::Shape(format!(
            "model expects {} features and {}-dim noise, data has {} features and config {}",
            model.feature_dim(),
            model.noise_dim(),
            train.dim(),
            config.noise_dim
        )));
    }
    if model.shares_trunk() != config.share_trunk {
        return Err(Error::Contract("model trunk sharing differs from the config".into()));
    }
    let mut trace = TrainTrace::default();
    // WGAN-GP mode never reads the regressor, so it is not pretrained.
    if !config.is_wgan_gp() {
        let started = Instant::now();
        let (initial, per_epoch) = pretrain_regressor(&mut model, train, config)?;
        trace.pretrain_initial_mse = Some(initial);
        trace.pretrain_mse = per_epoch;
        trace.pretrain_secs = started.elapsed().as_secs_f64();
    }

    let joint = train.joint();
    let mut sampler = Sampler {
        joint: &joint,
        rng: SeededRng::new(derive_seed(config.seed, TRAIN_TAG, 0)),
    };
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let sides = critic_side(config);
    let mut critic_opts: Vec<AdamState> = sides
        .iter()
        .map(|&s| AdamState::new(adam, &net_ref(&model, s).tensors()))
        .collect();
    let mut gen_opt = AdamState::new(adam, &model.generator.tensors());

    let loop_start = Instant::now();
    trace.records.reserve(config.iterations);
    for iteration in 0..config.iterations {
        let mut last = (0.0, 0.0, 0.0);
        for _ in 0..config.n_critic {
            let real = sampler.real(config.batch);
            let noise = sampler.noise(config.batch, config.noise_dim);
            let fake = model.generate_joint(&noise)?;
            let mu = (0..config.batch).map(|_| sampler.rng.uniform()).collect();
            let batch = CriticBatch { real, fake, mu };
            last = critic_step(&mut model, &mut critic_opts, &sides, &batch, config)
                .map_err(|e| wrap(e, "critic", iteration, &trace))?;
        }
        let noise = sampler.noise(config.batch, config.noise_dim);
        let real = sampler.real(config.batch);
        let generator_loss = generator_step(&mut model, &mut gen_opt, &GeneratorBatch { noise, real }, config)
            .map_err(|e| wrap(e, "generator", iteration, &trace))?;
        trace.records.push(TraceRecord {
            iteration,
            critic_loss: last.0,
            generator_loss,
            regression_loss: last.1,
            wasserstein: last.2,
            elapsed_secs: loop_start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, trace))
}

/// Numeric failures become divergence errors carrying the trace so far.
fn wrap(e: Error, stage: &str, iteration: usize, trace: &TrainTrace) -> Error {
    match e {
        Error::Divergence { detail, .. } => divergence(stage, iteration, detail, Some(trace)),
        other => other,
    }
}

/// `n` generated rows in normalized space, split into features and label.
/// Noise is drawn row by row from `seed`, so a longer batch extends a shorter one.
pub fn generate(model: &RganModel, n: usize, seed: u64) -> Result<TabularDataset> {
    let noise = gaussian_noise(n, model.noise_dim(), &mut SeededRng::new(seed));
    let joint = if n == 0 {
        Matrix::zeros(0, model.feature_dim() + 1)
    } else {
        model.generate_joint(&noise)?
    };
    TabularDataset::from_joint(
        &joint,
        crate::data::default_names(model.feature_dim()),
        "y",
        Provenance::Generated,
    )
}

/// [`generate`] with the column names of `like`.
pub fn generate_like(model: &RganModel, n: usize, seed: u64, like: &TabularDataset) -> Result<TabularDataset> {
    let ds = generate(model, n, seed)?;
    TabularDataset::new(
        ds.features().clone(),
        ds.labels().to_vec(),
        like.feature_names().to_vec(),
        like.label_name(),
        Provenance::Generated,
    )
}
