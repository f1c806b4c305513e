use super::{BoundModel, GanConfig, RganModel};
use crate::numeric::{grad_wrt_params, BoundMlp, DiffGraph, Matrix, NodeId};
use crate::{Error, Result};

/// One critic/regressor step's inputs, all as joint `[x, y]` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticBatch {
    pub real: Matrix,
    pub fake: Matrix,
    /// One interpolation weight per row, in (0, 1).
    pub mu: Vec<f64>,
}

impl CriticBatch {
    /// Row `i` is `μ_i·real_i + (1 − μ_i)·fake_i`.
    pub fn interpolated(&self) -> Result<Matrix> {
        if self.real.shape() != self.fake.shape() || self.mu.len() != self.real.rows() {
            return Err(Error::Shape(format!(
                "real {:?}, fake {:?} and {} interpolation weights",
                self.real.shape(),
                self.fake.shape(),
                self.mu.len()
            )));
        }
        let mut out = self.fake.clone();
        for (r, &mu) in self.mu.iter().enumerate() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(self.real.row(r)) {
                *o = mu * x + (1.0 - mu) * *o;
            }
        }
        Ok(out)
    }
}

/// One generator step's inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorBatch {
    pub noise: Matrix,
    /// Concurrent real joint rows for the real-sample regression residual.
    pub real: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct CriticTerms {
    pub loss: NodeId,
    /// `mean D(real) − mean D(fake)`.
    pub wasserstein: NodeId,
    /// `mean (‖∇D(interp)‖ − 1)²`, unweighted.
    pub penalty: NodeId,
    /// `mean (ŷ' − y')² + mean (ŷ − y)²`, unweighted.
    pub regression: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub loss: NodeId,
    /// `−mean D(G(z))`.
    pub adversarial: NodeId,
    /// `mean (ŷ' − y')² + mean (ŷ − y)²`, unweighted.
    pub regression: NodeId,
}

/// `mean (ŷ' − y')² + mean (ŷ − y)²` over a fake and a real joint batch.
pub fn regressor_loss(
    g: &mut DiffGraph,
    model: &BoundModel,
    real: NodeId,
    fake: NodeId,
) -> Result<NodeId> {
    let on_fake = model.regression_mse(g, fake)?;
    let on_real = model.regression_mse(g, real)?;
    g.add(on_fake, on_real)
}

/// `−mean D(real) + mean D(fake) + β·mean(‖∇D(interp)‖ − 1)² + γ·regression`.
/// The regression term is left out when critic regression is off.
pub fn critic_regressor_loss(
    g: &mut DiffGraph,
    model: &BoundModel,
    batch: &CriticBatch,
    config: &GanConfig,
) -> Result<CriticTerms> {
    config.validate()?;
    let interp = batch.interpolated()?;
    let real = g.leaf(batch.real.clone());
    let fake = g.leaf(batch.fake.clone());
    let interp = g.leaf(interp);

    let d_real = model.critic(g, real)?;
    let d_fake = model.critic(g, fake)?;
    let m_real = g.mean(d_real)?;
    let m_fake = g.mean(d_fake)?;
    let wasserstein = g.sub(m_real, m_fake)?;
    let mut loss = g.scale(wasserstein, -1.0)?;

    let d_interp = model.critic(g, interp)?;
    let grad = g.input_gradient(d_interp, interp)?;
    let norm = g.row_norm(grad)?;
    let gap = g.add_scalar(norm, -1.0)?;
    let sq = g.square(gap)?;
    let penalty = g.mean(sq)?;
    let weighted = g.scale(penalty, config.gp_weight)?;
    loss = g.add(loss, weighted)?;

    let regression = regressor_loss(g, model, real, fake)?;
    if config.critic_regression {
        let weighted = g.scale(regression, config.critic_reg_weight)?;
        loss = g.add(loss, weighted)?;
    }
    Ok(CriticTerms {
        loss,
        wasserstein,
        penalty,
        regression,
    })
}

/// `−mean D(G(z)) + α·regression`, with `(x', y') = G(z)`. The regression term
/// is left out when generator regression is off.
pub fn generator_loss(
    g: &mut DiffGraph,
    model: &BoundModel,
    batch: &GeneratorBatch,
    config: &GanConfig,
) -> Result<GeneratorTerms> {
    config.validate()?;
    let z = g.leaf(batch.noise.clone());
    let real = g.leaf(batch.real.clone());
    let fake = model.generator.forward(g, z)?;
    let d_fake = model.critic(g, fake)?;
    let m_fake = g.mean(d_fake)?;
    let adversarial = g.scale(m_fake, -1.0)?;
    let regression = regressor_loss(g, model, real, fake)?;
    let loss = if config.generator_regression {
        let weighted = g.scale(regression, config.generator_reg_weight)?;
        g.add(adversarial, weighted)?
    } else {
        adversarial
    };
    Ok(GeneratorTerms {
        loss,
        adversarial,
        regression,
    })
}

/// A loss that can be evaluated and differentiated on a whole model.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    Critic(&'a CriticBatch),
    Generator(&'a GeneratorBatch),
    /// Regression loss on a real and a fake joint batch.
    Regressor { real: &'a Matrix, fake: &'a Matrix },
}

fn build(g: &mut DiffGraph, bound: &BoundModel, objective: Objective, config: &GanConfig) -> Result<NodeId> {
    Ok(match objective {
        Objective::Critic(b) => critic_regressor_loss(g, bound, b, config)?.loss,
        Objective::Generator(b) => generator_loss(g, bound, b, config)?.loss,
        Objective::Regressor { real, fake } => {
            let r = g.leaf(real.clone());
            let f = g.leaf(fake.clone());
            regressor_loss(g, bound, r, f)?
        }
    })
}

pub fn objective_value(model: &RganModel, objective: Objective, config: &GanConfig) -> Result<f64> {
    let mut g = DiffGraph::new();
    let bound = model.bind(&mut g);
    let loss = build(&mut g, &bound, objective, config)?;
    Ok(g.value(loss).item())
}

/// Loss value and its gradient for every network, ordered like [`RganModel::nets`].
pub fn objective_gradients(
    model: &RganModel,
    objective: Objective,
    config: &GanConfig,
) -> Result<(f64, Vec<Vec<Matrix>>)> {
    let mut g = DiffGraph::new();
    let bound = model.bind(&mut g);
    let loss = build(&mut g, &bound, objective, config)?;
    let value = g.value(loss).item();
    let nets: Vec<&BoundMlp> = bound.nets();
    Ok((value, grad_wrt_params(&mut g, loss, &nets)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Layer, MlpParams, OutputActivation, Parameters, SeededRng};

    fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform()).collect()).unwrap()
    }

    fn batch(d: usize, n: usize, seed: u64) -> CriticBatch {
        let mut rng = SeededRng::new(seed);
        CriticBatch {
            real: random(n, d + 1, &mut rng),
            fake: random(n, d + 1, &mut rng),
            mu: (0..n).map(|_| rng.uniform()).collect(),
        }
    }

    #[test]
    fn interpolation_endpoints() {
        let mut b = batch(1, 3, 1);
        b.mu = vec![1.0, 0.0, 0.5];
        let i = b.interpolated().unwrap();
        assert_eq!(i.row(0), b.real.row(0));
        assert_eq!(i.row(1), b.fake.row(1));
        assert!((i.get(2, 0) - 0.5 * (b.real.get(2, 0) + b.fake.get(2, 0))).abs() < 1e-15);
    }

    #[test]
    fn identical_batches_cancel_the_wasserstein_terms() {
        let model = RganModel::new(2, &GanConfig::default());
        let mut b = batch(2, 6, 2);
        b.fake = b.real.clone();
        let mut g = DiffGraph::new();
        let bound = model.bind(&mut g);
        let t = critic_regressor_loss(&mut g, &bound, &b, &GanConfig::default()).unwrap();
        assert_eq!(g.value(t.wasserstein).item(), 0.0);
    }

    #[test]
    fn zero_weights_leave_the_plain_critic_objective() {
        let cfg = GanConfig { gp_weight: 0.0, critic_reg_weight: 0.0, ..Default::default() };
        let model = RganModel::new(2, &cfg);
        let b = batch(2, 5, 3);
        let value = objective_value(&model, Objective::Critic(&b), &cfg).unwrap();
        let mean = |m: &Matrix| model.critic(m).unwrap().iter().sum::<f64>() / m.rows() as f64;
        assert!((value - (mean(&b.fake) - mean(&b.real))).abs() < 1e-12);
    }

    /// Trunk is the identity on a single feature and the head is linear with
    /// weights (3, 4) on `[x, y]`, so ‖∇D‖ = 5 everywhere.
    #[test]
    fn linear_critic_penalty() {
        let cfg = GanConfig { critic_reg_weight: 0.0, gp_weight: 0.5, ..Default::default() };
        let mut model = RganModel::new(1, &cfg);
        let w_trunk = Matrix::from_vec(1, 32, (0..32).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        model.critic_trunk = MlpParams::from_layers(
            vec![Layer { weight: w_trunk, bias: Matrix::zeros(1, 32) }],
            OutputActivation::Identity,
            0.01,
        )
        .unwrap();
        let mut w_head = Matrix::zeros(33, 1);
        w_head.set(0, 0, 3.0);
        w_head.set(32, 0, 4.0);
        model.critic_head = MlpParams::from_layers(vec![Layer { weight: w_head, bias: Matrix::zeros(1, 1) }], OutputActivation::Identity, 0.01).unwrap();
        let b = batch(1, 4, 4);
        let mut g = DiffGraph::new();
        let bound = model.bind(&mut g);
        let t = critic_regressor_loss(&mut g, &bound, &b, &cfg).unwrap();
        assert!((g.value(t.penalty).item() - 16.0).abs() < 1e-12);
        let plain = -g.value(t.wasserstein).item();
        assert!((g.value(t.loss).item() - (plain + 0.5 * 16.0)).abs() < 1e-12);
    }

    #[test]
    fn constant_critic_pays_unit_penalty() {
        let cfg = GanConfig::default();
        let mut model = RganModel::new(2, &cfg);
        let zeros: Vec<Matrix> = model.critic_head.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect();
        model.critic_head = model.critic_head.with_tensors(zeros).unwrap();
        let b = batch(2, 4, 5);
        let mut g = DiffGraph::new();
        let bound = model.bind(&mut g);
        let t = critic_regressor_loss(&mut g, &bound, &b, &cfg).unwrap();
        assert_eq!(g.value(t.penalty).item(), 1.0);
    }

    #[test]
    fn alpha_zero_is_pure_adversarial() {
        let cfg = GanConfig { generator_reg_weight: 0.0, ..Default::default() };
        let model = RganModel::new(2, &cfg);
        let mut rng = SeededRng::new(6);
        let gb = GeneratorBatch { noise: random(5, 8, &mut rng), real: random(5, 3, &mut rng) };
        let value = objective_value(&model, Objective::Generator(&gb), &cfg).unwrap();
        let fake = model.generate_joint(&gb.noise).unwrap();
        let d: f64 = model.critic(&fake).unwrap().iter().sum::<f64>() / 5.0;
        assert!((value + d).abs() < 1e-12);
    }

    #[test]
    fn consistent_fake_rows_leave_only_the_real_residual() {
        let cfg = GanConfig::default();
        let model = RganModel::new(2, &cfg);
        let mut rng = SeededRng::new(7);
        let real = random(4, 3, &mut rng);
        let x = random(4, 2, &mut rng);
        let y = model.predict(&x).unwrap();
        let fake = x.concat_cols(&Matrix::column(&y)).unwrap();
        let value = objective_value(&model, Objective::Regressor { real: &real, fake: &fake }, &cfg).unwrap();
        let pred = model.predict(&real.slice_cols(0, 2)).unwrap();
        let real_mse = pred.iter().zip(real.col(2)).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 4.0;
        assert!((value - real_mse).abs() < 1e-15);
    }

    #[test]
    fn negative_weights_are_rejected() {
        let cfg = GanConfig { gp_weight: -1.0, ..Default::default() };
        let model = RganModel::new(1, &GanConfig::default());
        let b = batch(1, 2, 1);
        assert!(matches!(objective_value(&model, Objective::Critic(&b), &cfg), Err(Error::Config(_))));
    }
}
