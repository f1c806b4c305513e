use serde::{Deserialize, Serialize};

use super::TabularDataset;
use crate::numeric::SeededRng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

/// Disjoint `(train, test)` row indices drawn from one seeded permutation.
pub fn split_indices(rows: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.train + spec.test > rows {
        return Err(Error::Budget(format!(
            "split asks for {} train + {} test rows from {rows}",
            spec.train, spec.test
        )));
    }
    let perm = SeededRng::new(spec.seed).permutation(rows);
    Ok((
        perm[..spec.train].to_vec(),
        perm[spec.train..spec.train + spec.test].to_vec(),
    ))
}

pub fn split(ds: &TabularDataset, spec: &SplitSpec) -> Result<(TabularDataset, TabularDataset)> {
    let (train, test) = split_indices(ds.len(), spec)?;
    Ok((ds.select(&train), ds.select(&test)))
}
