use super::Regressor;
use crate::data::TabularDataset;
use crate::numeric::{
    grad_wrt_params, AdamConfig, AdamState, DiffGraph, Matrix, MlpParams, OutputActivation,
    Parameters, SeededRng, DEFAULT_LEAKY_SLOPE,
};
use crate::{Error, Result};

/// Leaky-relu MLP trained with Adam on minibatch mean squared error. The step
/// size decays linearly to a hundredth of its initial value over the epochs.
#[derive(Clone, Debug)]
pub struct MlpRegressor {
    net: MlpParams,
    /// Labels are standardized as `(y − offset) / scale` before training.
    offset: f64,
    scale: f64,
}

impl MlpRegressor {
    pub fn fit(
        ds: &TabularDataset,
        hidden: &[usize],
        epochs: usize,
        learning_rate: f64,
        batch: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let mut dims = vec![ds.dim()];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut net = MlpParams::new(&dims, OutputActivation::Identity, DEFAULT_LEAKY_SLOPE, &mut rng);
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(learning_rate), &net.tensors());

        let n = ds.len();
        let offset = ds.labels().iter().sum::<f64>() / n as f64;
        let var = ds.labels().iter().map(|y| (y - offset).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..epochs {
            let progress = epoch as f64 / epochs.max(1) as f64;
            adam.set_learning_rate(learning_rate * (1.0 - 0.99 * progress));
            rng.shuffle(&mut order);
            for chunk in order.chunks(batch.max(1)) {
                let x = ds.features().select_rows(chunk);
                let y = Matrix::column(&chunk.iter().map(|&i| (ds.labels()[i] - offset) / scale).collect::<Vec<_>>());
                let mut g = DiffGraph::new();
                let bound = net.bind(&mut g);
                let xn = g.leaf(x);
                let yn = g.leaf(y);
                let pred = bound.forward(&mut g, xn)?;
                let res = g.sub(pred, yn)?;
                let sq = g.square(res)?;
                let loss = g.mean(sq)?;
                if !g.value(loss).item().is_finite() {
                    return Err(Error::Divergence {
                        stage: "mlp-regressor".into(),
                        step: epoch,
                        detail: "non-finite training loss".into(),
                        trace: None,
                    });
                }
                let grads = grad_wrt_params(&mut g, loss, &[&bound])?.remove(0);
                adam.step(&mut net.tensors_mut(), &grads)?;
            }
        }
        Ok(Self { net, offset, scale })
    }

    pub fn network(&self) -> &MlpParams {
        &self.net
    }
}

impl Regressor for MlpRegressor {
    fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .net
            .forward(features)?
            .into_vec()
            .into_iter()
            .map(|v| self.offset + self.scale * v)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::regress::{evaluate, fit, RegressorSpec};

    #[test]
    fn constant_labels_are_learned() {
        let mut ds = crate::data::synth_make("sinusoid-2d", 40, 0.0, 1).unwrap();
        ds = TabularDataset::unnamed(ds.features().clone(), vec![0.5; 40], Provenance::Real).unwrap();
        let model = fit(&RegressorSpec::mlp(3), &ds).unwrap();
        let m = evaluate(model.as_ref(), &ds).unwrap();
        assert!(m.mae < 1e-3, "training MAE {}", m.mae);
    }

    #[test]
    fn same_seed_same_predictions() {
        let ds = crate::data::synth_make("sinusoid-2d", 30, 0.0, 2).unwrap();
        let spec = RegressorSpec::Mlp { hidden: vec![8], epochs: 20, learning_rate: 1e-3, batch: 8, seed: 5 };
        let a = fit(&spec, &ds).unwrap().predict(ds.features()).unwrap();
        let b = fit(&spec, &ds).unwrap().predict(ds.features()).unwrap();
        assert_eq!(a, b);
    }
}
