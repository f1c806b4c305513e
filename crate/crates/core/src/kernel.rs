//! Gaussian (RBF) kernel shared by the kernel-ridge regressor and MMD.

use serde::{Deserialize, Serialize};

use crate::numeric::{sq_dist, Matrix};
use crate::{Error, Result};

/// How the RBF bandwidth σ is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Bandwidth {
    #[default]
    /// Median Euclidean distance over all distinct row pairs of the data the
    /// kernel is applied to; falls back to 1 when that median is zero.
    MedianHeuristic,
    Fixed { sigma: f64 },
}

impl Bandwidth {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Bandwidth::Fixed { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("RBF bandwidth must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    /// Resolves σ for data drawn from `sets` pooled together.
    pub fn resolve(&self, sets: &[&Matrix]) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            Bandwidth::Fixed { sigma } => sigma,
            Bandwidth::MedianHeuristic => {
                let median = median_pairwise_distance(sets);
                if median > 0.0 {
                    median
                } else {
                    1.0
                }
            }
        })
    }
}

/// Median of `‖a − b‖` over unordered pairs of distinct rows of the pooled sets.
pub fn median_pairwise_distance(sets: &[&Matrix]) -> f64 {
    let rows: Vec<&[f64]> = sets
        .iter()
        .flat_map(|m| (0..m.rows()).map(move |r| m.row(r)))
        .collect();
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if d.len() % 2 == 1 {
        upper.sqrt()
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower.sqrt() + upper.sqrt())
    }
}

/// `exp(−‖a − b‖² / (2σ²))`.
#[inline]
pub fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp()
}

/// `K[i][j] = rbf(a_i, b_j)`.
pub fn rbf_matrix(a: &Matrix, b: &Matrix, sigma: f64) -> Matrix {
    let mut k = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        for (j, v) in k.row_mut(i).iter_mut().enumerate() {
            *v = rbf(ai, b.row(j), sigma);
        }
    }
    k
}
