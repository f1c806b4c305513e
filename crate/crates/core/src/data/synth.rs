//! Closed-form synthetic regression benchmarks.
//!
//! All inputs are drawn uniformly from `[0, 1]^d`; labels are the documented
//! function plus `N(0, noise_sd²)` noise.
//!
//! | name              | d  | label                                                          |
//! |-------------------|----|----------------------------------------------------------------|
//! | `friedman-like`   | 10 | `10 sin(π x1 x2) + 20 (x3 − ½)² + 10 x4 + 5 x5` (x6..x10 unused) |
//! | `sinusoid-2d`     | 2  | `sin(2π x1) + ½ cos(π x2)`                                     |
//! | `piecewise-plant` | 4  | three operating regimes split on `x1` at 0.4 and 0.7          |

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{default_names, Provenance, TabularDataset};
use crate::numeric::{Matrix, SeededRng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    FriedmanLike,
    Sinusoid2d,
    PiecewisePlant,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [
        SyntheticKind::FriedmanLike,
        SyntheticKind::Sinusoid2d,
        SyntheticKind::PiecewisePlant,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Catalog(name.to_string()))
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::FriedmanLike => "friedman-like",
            SyntheticKind::Sinusoid2d => "sinusoid-2d",
            SyntheticKind::PiecewisePlant => "piecewise-plant",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SyntheticKind::FriedmanLike => 10,
            SyntheticKind::Sinusoid2d => 2,
            SyntheticKind::PiecewisePlant => 4,
        }
    }

    /// Noise-free label at `x` (raw input scale).
    pub fn truth(self, x: &[f64]) -> f64 {
        match self {
            SyntheticKind::FriedmanLike => {
                10.0 * (PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
            }
            SyntheticKind::Sinusoid2d => (2.0 * PI * x[0]).sin() + 0.5 * (PI * x[1]).cos(),
            SyntheticKind::PiecewisePlant => {
                if x[0] < 0.4 {
                    1.5 * x[1] + 0.5 * x[2]
                } else if x[0] < 0.7 {
                    0.8 - x[1] * x[2] + 0.3 * x[3]
                } else {
                    0.2 + 0.6 * x[3] * x[3] + 0.4 * (3.0 * x[1]).sin()
                }
            }
        }
    }
}

pub fn synth_make(name: &str, n: usize, noise_sd: f64, seed: u64) -> Result<TabularDataset> {
    let kind = SyntheticKind::from_name(name)?;
    if !(noise_sd >= 0.0) {
        return Err(Error::Contract(format!("noise sd must be non-negative, got {noise_sd}")));
    }
    let d = kind.dim();
    let mut rng = SeededRng::new(seed);
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let start = values.len();
        values.extend((0..d).map(|_| rng.uniform()));
        let y = kind.truth(&values[start..]);
        let noise = if noise_sd > 0.0 { noise_sd * rng.normal() } else { 0.0 };
        labels.push(y + noise);
    }
    TabularDataset::new(
        Matrix::from_vec(n, d, values)?,
        labels,
        default_names(d),
        "y",
        Provenance::Real,
    )
}
