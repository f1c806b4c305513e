use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Observed range of one column. Zero-range columns are flagged `degenerate`
/// and map to the constant 0.5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl ColumnRange {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        Self {
            min,
            max,
            degenerate: !(max > min),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.degenerate {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        if self.degenerate {
            self.min
        } else {
            v * (self.max - self.min) + self.min
        }
    }
}

/// Min-max scaling to `[0, 1]`, per feature column and for the label.
/// Values outside the fitted range are not clipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub features: Vec<ColumnRange>,
    pub label: ColumnRange,
}

impl NormalizationSpec {
    /// Fits on `ds`, which should be the real training split.
    pub fn fit(ds: &TabularDataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Contract("cannot fit a normaliser on an empty dataset".into()));
        }
        let f = ds.features();
        Ok(Self {
            features: (0..f.cols())
                .map(|c| ColumnRange::fit((0..f.rows()).map(|r| f.get(r, c))))
                .collect(),
            label: ColumnRange::fit(ds.labels().iter().copied()),
        })
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, c)| c.degenerate)
            .map(|(i, _)| i)
            .collect()
    }

    fn check(&self, ds: &TabularDataset) -> Result<()> {
        if ds.dim() != self.features.len() {
            return Err(Error::Shape(format!(
                "normaliser fitted on {} feature columns, dataset has {}",
                self.features.len(),
                ds.dim()
            )));
        }
        Ok(())
    }

    fn map(&self, ds: &TabularDataset, forward: bool) -> Result<TabularDataset> {
        self.check(ds)?;
        let f = ds.features();
        let mut out = Matrix::zeros(f.rows(), f.cols());
        for r in 0..f.rows() {
            for (c, range) in self.features.iter().enumerate() {
                let v = f.get(r, c);
                out.set(r, c, if forward { range.apply(v) } else { range.invert(v) });
            }
        }
        let labels = ds
            .labels()
            .iter()
            .map(|&y| if forward { self.label.apply(y) } else { self.label.invert(y) })
            .collect();
        TabularDataset::new(
            out,
            labels,
            ds.feature_names().to_vec(),
            ds.label_name(),
            ds.provenance(),
        )
    }

    pub fn apply(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.map(ds, true)
    }

    pub fn invert(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        self.map(ds, false)
    }

    /// Feature-only scaling for unlabeled pools.
    pub fn apply_features(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.features.len() {
            return Err(Error::Shape(format!(
                "normaliser fitted on {} feature columns, matrix has {}",
                self.features.len(),
                features.cols()
            )));
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (v, range) in out.row_mut(r).iter_mut().zip(&self.features) {
                *v = range.apply(*v);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use proptest::prelude::*;

    fn one_col(values: &[f64]) -> TabularDataset {
        TabularDataset::unnamed(Matrix::column(values), values.to_vec(), Provenance::Real).unwrap()
    }

    #[test]
    fn min_max_definition() {
        let ds = one_col(&[2.0, 4.0, 6.0]);
        let spec = NormalizationSpec::fit(&ds).unwrap();
        let n = spec.apply(&ds).unwrap();
        assert_eq!(n.features().as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(n.labels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_half() {
        let ds = one_col(&[5.0, 5.0]);
        let spec = NormalizationSpec::fit(&ds).unwrap();
        assert_eq!(spec.degenerate_columns(), vec![0]);
        assert_eq!(spec.apply(&ds).unwrap().features().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn column_count_mismatch() {
        let spec = NormalizationSpec::fit(&one_col(&[1.0, 2.0])).unwrap();
        let two = crate::data::synth_make("sinusoid-2d", 4, 0.0, 0).unwrap();
        assert!(matches!(spec.apply(&two), Err(Error::Shape(_))));
    }

    #[test]
    fn out_of_range_values_are_not_clipped() {
        let spec = NormalizationSpec::fit(&one_col(&[0.0, 10.0])).unwrap();
        let n = spec.apply(&one_col(&[20.0])).unwrap();
        assert_eq!(n.features().as_slice(), &[2.0]);
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(values in proptest::collection::vec(-1e3f64..1e3, 2..40), seed in 0u64..1000) {
            let n = values.len() / 2;
            let f = Matrix::from_vec(n, 2, values[..2 * n].to_vec()).unwrap();
            let labels: Vec<f64> = (0..n).map(|i| (i as f64 + seed as f64).sin() * 50.0).collect();
            let ds = TabularDataset::unnamed(f, labels, Provenance::Real).unwrap();
            let spec = NormalizationSpec::fit(&ds).unwrap();
            let back = spec.invert(&spec.apply(&ds).unwrap()).unwrap();
            for (a, b) in back.features().as_slice().iter().zip(ds.features().as_slice()) {
                // degenerate columns invert to their constant, which is the value itself
                prop_assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in back.labels().iter().zip(ds.labels()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
