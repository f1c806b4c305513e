use nalgebra::{DMatrix, DVector};

use super::Regressor;
use crate::kernel::{rbf, Bandwidth};
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Smallest accepted ratio of squared Cholesky pivots before the system is
/// treated as singular.
const MIN_PIVOT_RATIO: f64 = 1e-14;

/// RBF kernel ridge regression on mean-centred labels:
/// `(K + ridge·I) c = y − ȳ`, `f(x) = ȳ + Σ c_i k(x, x_i)`.
#[derive(Clone, Debug)]
pub struct KernelRidge {
    support: Matrix,
    coefficients: Vec<f64>,
    offset: f64,
    sigma: f64,
}

impl KernelRidge {
    pub fn fit(features: &Matrix, labels: &[f64], bandwidth: Bandwidth, ridge: f64) -> Result<Self> {
        let n = features.rows();
        if n != labels.len() || n == 0 {
            return Err(Error::Shape(format!(
                "{n} feature rows and {} labels",
                labels.len()
            )));
        }
        let sigma = bandwidth.resolve(&[features])?;
        let offset = labels.iter().sum::<f64>() / n as f64;

        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rbf(features.row(i), features.row(j), sigma);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += ridge;
        }
        let rhs = DVector::from_iterator(n, labels.iter().map(|y| y - offset));
        let singular = || {
            Error::Conditioning(format!(
                "kernel matrix with ridge {ridge} is singular (duplicate rows?); use ridge > 0"
            ))
        };
        let chol = k.cholesky().ok_or_else(singular)?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(lo * lo > MIN_PIVOT_RATIO * hi * hi) {
            return Err(singular());
        }
        let c = chol.solve(&rhs);
        Ok(Self {
            support: features.clone(),
            coefficients: c.iter().copied().collect(),
            offset,
            sigma,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Label mean added back to every prediction.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, c)| c * rbf(x, self.support.row(i), self.sigma))
                .sum::<f64>()
    }
}

impl Regressor for KernelRidge {
    fn predict(&self, features: &Matrix) -> Result<Vec<f64>> {
        if features.cols() != self.support.cols() {
            return Err(Error::Shape(format!(
                "model fitted on {} features, got {}",
                self.support.cols(),
                features.cols()
            )));
        }
        Ok((0..features.rows()).map(|r| self.predict_row(features.row(r))).collect())
    }
}
