//! Active selection of training rows.
//!
//! An initial labeled set is taken from the points nearest to k-means
//! centroids; afterwards the unlabeled point maximising
//! `d_x · d_y / R` is labeled, one at a time, refitting the scoring model
//! after each acquisition:
//!
//! * `d_x`: distance to the nearest labeled point,
//! * `d_y`: smallest gap between the model prediction at the point and any
//!   observed label,
//! * `R`: summed distance to every pool point (labeled or not), which
//!   penalises outliers.

mod kmeans;

use serde::{Deserialize, Serialize};

pub use kmeans::{choose_k, kmeans, kmeans_restarts, mean_silhouette, ClusterResult};

use crate::data::TabularDataset;
use crate::numeric::{dist, Matrix};
use crate::regress::{Regressor, RegressorFactory};
use crate::{Error, Result};

/// k-means restarts used for the initial labeled set.
pub const INIT_RESTARTS: usize = 5;
/// Upper end of the silhouette scan when the initial size is not fixed.
const MAX_SCANNED_K: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelBudget {
    /// Initial labeled count `M0`; `None` picks it by silhouette over
    /// `[2, min(10, ⌊N/2⌋, max)]`.
    pub initial: Option<usize>,
    /// Final labeled count `Mmax`.
    pub max: usize,
}

impl LabelBudget {
    pub fn fixed(initial: usize, max: usize) -> Self {
        Self {
            initial: Some(initial),
            max,
        }
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.max > pool_size {
            return Err(Error::Budget(format!(
                "cannot label {} of a {pool_size}-point pool",
                self.max
            )));
        }
        if self.max < 2 {
            return Err(Error::Budget(format!("label budget {} is below 2", self.max)));
        }
        if let Some(m0) = self.initial {
            if m0 < 2 || m0 > self.max {
                return Err(Error::Budget(format!(
                    "initial count {m0} must lie in [2, {}]",
                    self.max
                )));
            }
        }
        Ok(())
    }
}

/// Score components for one unlabeled candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgsTerms {
    pub index: usize,
    pub d_x: f64,
    pub d_y: f64,
    pub r: f64,
    pub score: f64,
}

impl IgsTerms {
    fn new(index: usize, d_x: f64, d_y: f64, r: f64) -> Self {
        let score = if r > 0.0 { d_x * d_y / r } else { 0.0 };
        Self {
            index,
            d_x,
            d_y,
            r,
            score,
        }
    }
}

/// Labeled/unlabeled partition of a pool plus the current scoring model.
pub struct SelectionState {
    labeled: Vec<usize>,
    labels: Vec<f64>,
    unlabeled: Vec<usize>,
    model: Box<dyn Regressor>,
}

impl SelectionState {
    /// `unlabeled` is everything in `0..pool_size` not in `labeled`, ascending.
    pub fn new(
        pool_size: usize,
        labeled: Vec<usize>,
        labels: Vec<f64>,
        model: Box<dyn Regressor>,
    ) -> Result<Self> {
        if labeled.len() != labels.len() {
            return Err(Error::Shape("one label per labeled index".into()));
        }
        let mut is_labeled = vec![false; pool_size];
        for &i in &labeled {
            if i >= pool_size || is_labeled[i] {
                return Err(Error::Contract(format!("bad or repeated labeled index {i}")));
            }
            is_labeled[i] = true;
        }
        let unlabeled = (0..pool_size).filter(|&i| !is_labeled[i]).collect();
        Ok(Self {
            labeled,
            labels,
            unlabeled,
            model,
        })
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    fn acquire(&mut self, index: usize, label: f64, model: Box<dyn Regressor>) {
        self.unlabeled.retain(|&i| i != index);
        self.labeled.push(index);
        self.labels.push(label);
        self.model = model;
    }
}

/// `R_n = Σ_i ‖x_n − x_i‖` over the whole pool.
pub fn representativeness(pool: &Matrix) -> Vec<f64> {
    (0..pool.rows())
        .map(|n| (0..pool.rows()).map(|i| dist(pool.row(n), pool.row(i))).sum())
        .collect()
}

fn score_with(state: &SelectionState, pool: &Matrix, r: &[f64]) -> Result<Vec<IgsTerms>> {
    if state.labeled.is_empty() {
        return Err(Error::Contract("scoring needs at least one labeled point".into()));
    }
    let candidates = pool.select_rows(&state.unlabeled);
    let predictions = state.model.predict(&candidates)?;
    Ok(state
        .unlabeled
        .iter()
        .zip(&predictions)
        .map(|(&n, &pred)| {
            let x = pool.row(n);
            let d_x = state
                .labeled
                .iter()
                .map(|&m| dist(x, pool.row(m)))
                .fold(f64::INFINITY, f64::min);
            let d_y = state
                .labels
                .iter()
                .map(|&y| (pred - y).abs())
                .fold(f64::INFINITY, f64::min);
            IgsTerms::new(n, d_x, d_y, r[n])
        })
        .collect())
}

/// Scores every unlabeled point, in ascending index order.
pub fn igs_score(state: &SelectionState, pool: &Matrix) -> Result<Vec<IgsTerms>> {
    score_with(state, pool, &representativeness(pool))
}

/// Highest score; ties go to the lowest pool index.
fn argmax(scores: &[IgsTerms]) -> Option<IgsTerms> {
    scores.iter().copied().fold(None, |best, t| match best {
        Some(b) if t.score > b.score || (t.score == b.score && t.index < b.index) => Some(t),
        None => Some(t),
        keep => keep,
    })
}

/// One point per cluster: the member nearest its centroid (ties → lowest index).
pub fn init_select(points: &Matrix, clusters: &ClusterResult) -> Vec<usize> {
    (0..clusters.k)
        .filter_map(|c| {
            (0..points.rows())
                .filter(|&i| clusters.assignments[i] == c)
                .map(|i| (i, dist(points.row(i), clusters.centroids.row(c))))
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd <= d => best,
                    _ => Some((i, d)),
                })
                .map(|(i, _)| i)
        })
        .collect()
}

/// One acquisition-log row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub step: usize,
    pub index: usize,
    pub d_x: f64,
    pub d_y: f64,
    pub r: f64,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActiveSelection {
    /// Pool indices in acquisition order; the first `initial_count` come from clustering.
    pub order: Vec<usize>,
    pub labels: Vec<f64>,
    pub initial_count: usize,
    pub cluster_silhouette: Option<f64>,
    pub log: Vec<AcquisitionRecord>,
}

impl ActiveSelection {
    /// Selected rows of `pool`, in acquisition order.
    pub fn dataset(&self, pool: &TabularDataset) -> TabularDataset {
        pool.select(&self.order)
    }
}

/// Acquisition log as CSV: `step,index,d_x,d_y,r,score`.
pub fn write_acquisition_csv(log: &[AcquisitionRecord], path: impl AsRef<std::path::Path>) -> Result<()> {
    crate::data::write_records(path.as_ref(), &[], &["step", "index", "d_x", "d_y", "r", "score"], log)
}

fn fit_model(
    pool: &Matrix,
    labeled: &[usize],
    labels: &[f64],
    factory: &dyn RegressorFactory,
) -> Result<Box<dyn Regressor>> {
    let ds = TabularDataset::unnamed(
        pool.select_rows(labeled),
        labels.to_vec(),
        crate::data::Provenance::Real,
    )?;
    factory.fit(&ds)
}

/// Runs the full acquisition loop until `budget.max` points are labeled.
pub fn run_active_selection(
    pool: &Matrix,
    oracle: &mut dyn FnMut(usize) -> f64,
    budget: &LabelBudget,
    seed: u64,
    factory: &dyn RegressorFactory,
) -> Result<ActiveSelection> {
    let n = pool.rows();
    budget.validate(n)?;

    if budget.max == n {
        let order: Vec<usize> = (0..n).collect();
        let labels = order.iter().map(|&i| oracle(i)).collect();
        return Ok(ActiveSelection {
            order,
            labels,
            initial_count: n,
            cluster_silhouette: None,
            log: Vec::new(),
        });
    }

    let m0 = match budget.initial {
        Some(m0) => m0,
        None => {
            let hi = MAX_SCANNED_K.min(n / 2).min(budget.max).min(n - 1);
            if hi < 2 {
                2
            } else {
                choose_k(pool, 2..=hi, seed)?
            }
        }
    };
    let clusters = kmeans_restarts(pool, m0, seed, INIT_RESTARTS)?;
    let initial = init_select(pool, &clusters);
    let labels: Vec<f64> = initial.iter().map(|&i| oracle(i)).collect();
    let model = fit_model(pool, &initial, &labels, factory)?;
    let mut state = SelectionState::new(n, initial, labels, model)?;
    let initial_count = state.labeled.len();

    let r = representativeness(pool);
    let mut log = Vec::with_capacity(budget.max.saturating_sub(initial_count));
    while state.labeled.len() < budget.max {
        let scores = score_with(&state, pool, &r)?;
        let best = argmax(&scores).expect("unlabeled points remain while under budget");
        let y = oracle(best.index);
        log.push(AcquisitionRecord {
            step: state.labeled.len() + 1,
            index: best.index,
            d_x: best.d_x,
            d_y: best.d_y,
            r: best.r,
            score: best.score,
        });
        let mut labeled = state.labeled.clone();
        labeled.push(best.index);
        let mut ys = state.labels.clone();
        ys.push(y);
        let model = fit_model(pool, &labeled, &ys, factory)?;
        state.acquire(best.index, y, model);
    }

    Ok(ActiveSelection {
        order: state.labeled,
        labels: state.labels,
        initial_count,
        cluster_silhouette: Some(clusters.silhouette),
        log,
    })
}
