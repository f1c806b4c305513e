//! Tabular datasets: ingestion, normalisation, splitting, synthetic
//! benchmarks and real+generated concatenation.

mod csv_io;
mod normalize;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, write_csv};
pub(crate) use csv_io::write_records;
pub use normalize::{ColumnRange, NormalizationSpec};
pub use split::{split, split_indices, SplitSpec};
pub use synth::{synth_make, SyntheticKind};

use crate::numeric::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Real,
    Generated,
    Mixed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Generated => "generated",
            Provenance::Mixed => "mixed",
        }
    }
}

/// Feature matrix (`M × d`) with one real label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset {
    features: Matrix,
    labels: Vec<f64>,
    feature_names: Vec<String>,
    label_name: String,
    provenance: Provenance,
}

impl TabularDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<f64>,
        feature_names: Vec<String>,
        label_name: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::Shape(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            label_name: label_name.into(),
            provenance,
        })
    }

    /// Unnamed dataset with columns `x1..xd` and label `y`.
    pub fn unnamed(features: Matrix, labels: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let names = default_names(features.cols());
        Self::new(features, labels, names, "y", provenance)
    }

    /// Splits a joint `[x, y]` matrix whose last column is the label.
    pub fn from_joint(
        joint: &Matrix,
        feature_names: Vec<String>,
        label_name: impl Into<String>,
        provenance: Provenance,
    ) -> Result<Self> {
        if joint.cols() == 0 {
            return Err(Error::Shape("joint matrix has no label column".into()));
        }
        let d = joint.cols() - 1;
        let features = joint.slice_cols(0, d);
        let labels = joint.col(d);
        Self::new(features, labels, feature_names, label_name, provenance)
    }

    pub fn empty_like(&self, provenance: Provenance) -> Self {
        Self {
            features: Matrix::zeros(0, self.dim()),
            labels: Vec::new(),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// `[x, y]` rows, `M × (d+1)`.
    pub fn joint(&self) -> Matrix {
        self.features
            .concat_cols(&Matrix::column(&self.labels))
            .expect("row counts agree by invariant")
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            provenance: self.provenance,
        }
    }

    /// Rows of `self` followed by rows of `generated`.
    pub fn concat(&self, generated: &TabularDataset) -> Result<Self> {
        if generated.is_empty() {
            return Ok(self.clone());
        }
        if self.dim() != generated.dim() {
            return Err(Error::Shape(format!(
                "cannot concatenate d={} with d={}",
                self.dim(),
                generated.dim()
            )));
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&generated.labels);
        Ok(Self {
            features: self.features.vstack(&generated.features)?,
            labels,
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            provenance: Provenance::Mixed,
        })
    }
}

pub(crate) fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x{i}")).collect()
}
