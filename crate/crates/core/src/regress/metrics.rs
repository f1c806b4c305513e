use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::data::TabularDataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
}

pub fn metrics_from(predictions: &[f64], labels: &[f64]) -> Result<Metrics> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Contract(format!(
            "metrics need equal non-empty vectors ({} predictions, {} labels)",
            predictions.len(),
            labels.len()
        )));
    }
    let n = labels.len() as f64;
    let (abs, sq) = predictions
        .iter()
        .zip(labels)
        .fold((0.0, 0.0), |(a, s), (p, y)| {
            let r = p - y;
            (a + r.abs(), s + r * r)
        });
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
    })
}

/// MAE and RMSE of `model` on `test`, in whatever label space `test` is in.
pub fn evaluate(model: &dyn Regressor, test: &TabularDataset) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Contract("evaluation set is empty".into()));
    }
    let pred = model.predict(test.features())?;
    metrics_from(&pred, test.labels())
}
