//! Dual evaluation of generated batches: kernel MMD² against the real data
//! and a bidirectional cross-validated diversity score, combined to pick the
//! best of several candidate batches. Lower is better for both.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::kernel::{rbf, Bandwidth};
use crate::numeric::{derive_seed, Matrix, SeededRng};
use crate::regress::{metrics_from, RegressorFactory};
use crate::{Error, Result};

const FOLD_TAG: u64 = 0x666f_6c64;

/// RBF kernel over joint rows `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

impl KernelSpec {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed { sigma },
        }
    }
}

/// Biased (V-statistic) MMD² between two row sets under a fixed σ, clamped at 0.
pub fn mmd2_rows(a: &Matrix, b: &Matrix, sigma: f64) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Contract("MMD needs two non-empty sets".into()));
    }
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "MMD between {}- and {}-column rows",
            a.cols(),
            b.cols()
        )));
    }
    let mean_kernel = |p: &Matrix, q: &Matrix| {
        let mut total = 0.0;
        for i in 0..p.rows() {
            for j in 0..q.rows() {
                total += rbf(p.row(i), q.row(j), sigma);
            }
        }
        total / (p.rows() * q.rows()) as f64
    };
    let v = mean_kernel(a, a) - 2.0 * mean_kernel(a, b) + mean_kernel(b, b);
    Ok(v.max(0.0))
}

/// MMD² on joint rows; the median-heuristic bandwidth pools both sets.
pub fn mmd2(a: &TabularDataset, b: &TabularDataset, kernel: &KernelSpec) -> Result<f64> {
    let (ja, jb) = (a.joint(), b.joint());
    let sigma = kernel.bandwidth.resolve(&[&ja, &jb])?;
    mmd2_rows(&ja, &jb, sigma)
}

/// Permutation seeds for the real and generated folds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSeeds {
    pub real: u64,
    pub generated: u64,
}

impl FoldSeeds {
    pub fn derive(seed: u64) -> Self {
        Self {
            real: derive_seed(seed, FOLD_TAG, 0),
            generated: derive_seed(seed, FOLD_TAG, 1),
        }
    }

    pub fn mirrored(self) -> Self {
        Self {
            real: self.generated,
            generated: self.real,
        }
    }
}

/// Fold `i` of `k` is `perm[i·n/k .. (i+1)·n/k]` for a seeded permutation of `0..n`.
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let perm = SeededRng::new(seed).permutation(n);
    (0..k).map(|i| perm[i * n / k..(i + 1) * n / k].to_vec()).collect()
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut held = vec![false; n];
    for &i in fold {
        held[i] = true;
    }
    (0..n).filter(|&i| !held[i]).collect()
}

/// Σ over folds of the MAE on one `test` fold after fitting on the other `train` folds.
fn directional_mae_sum(
    train: &TabularDataset,
    train_folds: &[Vec<usize>],
    test: &TabularDataset,
    test_folds: &[Vec<usize>],
    factory: &dyn RegressorFactory,
) -> Result<f64> {
    let mut total = 0.0;
    for (train_held, test_fold) in train_folds.iter().zip(test_folds) {
        let model = factory.fit(&train.select(&complement(train.len(), train_held)))?;
        let held = test.select(test_fold);
        let predictions = model.predict(held.features())?;
        total += metrics_from(&predictions, held.labels())?.mae;
    }
    Ok(total)
}

/// `S = (2/K)(Σ MAE_gen→real + Σ MAE_real→gen)` with explicit fold seeds.
pub fn diversity_score_with(
    real: &TabularDataset,
    generated: &TabularDataset,
    k: usize,
    factory: &dyn RegressorFactory,
    seeds: FoldSeeds,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::Contract(format!("diversity score needs K >= 2, got {k}")));
    }
    if real.len() < k || generated.len() < k {
        return Err(Error::Contract(format!(
            "diversity score with K={k} needs at least {k} rows per set, got {} real and {} generated",
            real.len(),
            generated.len()
        )));
    }
    if real.dim() != generated.dim() {
        return Err(Error::Shape(format!(
            "real rows have {} features, generated rows {}",
            real.dim(),
            generated.dim()
        )));
    }
    let real_folds = fold_indices(real.len(), k, seeds.real);
    let gen_folds = fold_indices(generated.len(), k, seeds.generated);
    let gen_to_real = directional_mae_sum(generated, &gen_folds, real, &real_folds, factory)?;
    let real_to_gen = directional_mae_sum(real, &real_folds, generated, &gen_folds, factory)?;
    Ok(2.0 / k as f64 * (gen_to_real + real_to_gen))
}

/// Diversity score with fold seeds derived from `seed`.
pub fn diversity_score(
    real: &TabularDataset,
    generated: &TabularDataset,
    k: usize,
    factory: &dyn RegressorFactory,
    seed: u64,
) -> Result<f64> {
    diversity_score_with(real, generated, k, factory, FoldSeeds::derive(seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchQuality {
    pub batch: usize,
    pub mmd2: f64,
    pub ds: f64,
    /// 1 = lowest value.
    pub mmd_rank: usize,
    pub ds_rank: usize,
    /// Sum of the min-max normalized mmd2 and ds.
    pub combined: f64,
    pub selected: bool,
}

/// Ranks 1..=k by ascending value, ties by position.
fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Maps to [0, 1]; a constant vector maps to all zeros.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Scores every batch and returns the index of the lowest combined score
/// (ties → lower mmd2, then lower index). The kernel bandwidth is resolved
/// once on the real joint rows and the same fold seeds are used for every
/// batch, so a batch's scores do not depend on its position in the list.
pub fn select_best_batch(
    real: &TabularDataset,
    batches: &[TabularDataset],
    kernel: &KernelSpec,
    k: usize,
    factory: &dyn RegressorFactory,
    seed: u64,
) -> Result<(usize, Vec<BatchQuality>)> {
    if batches.is_empty() {
        return Err(Error::Contract("no candidate batches to select from".into()));
    }
    let real_joint = real.joint();
    let sigma = kernel.bandwidth.resolve(&[&real_joint])?;
    let seeds = FoldSeeds::derive(seed);
    let raw: Vec<(f64, f64)> = batches
        .par_iter()
        .map(|b| {
            let m = mmd2_rows(&real_joint, &b.joint(), sigma)?;
            let s = diversity_score_with(real, b, k, factory, seeds)?;
            Ok((m, s))
        })
        .collect::<Result<_>>()?;
    let mmd: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let ds: Vec<f64> = raw.iter().map(|r| r.1).collect();
    let (mmd_rank, ds_rank) = (ranks(&mmd), ranks(&ds));
    let (mmd_n, ds_n) = (min_max(&mmd), min_max(&ds));
    let combined: Vec<f64> = mmd_n.iter().zip(&ds_n).map(|(a, b)| a + b).collect();
    let best = (0..batches.len())
        .min_by(|&a, &b| {
            combined[a]
                .total_cmp(&combined[b])
                .then(mmd[a].total_cmp(&mmd[b]))
                .then(a.cmp(&b))
        })
        .expect("at least one batch");
    let qualities = (0..batches.len())
        .map(|i| BatchQuality {
            batch: i,
            mmd2: mmd[i],
            ds: ds[i],
            mmd_rank: mmd_rank[i],
            ds_rank: ds_rank[i],
            combined: combined[i],
            selected: i == best,
        })
        .collect();
    Ok((best, qualities))
}

pub const QUALITY_HEADER: [&str; 7] =
    ["batch", "mmd2", "ds", "mmd_rank", "ds_rank", "combined", "selected"];

/// Quality report CSV; a comment line records that lower scores are better.
pub fn write_quality_csv(rows: &[BatchQuality], path: impl AsRef<Path>) -> Result<()> {
    crate::data::write_records(
        path.as_ref(),
        &["lower mmd2, ds and combined are better"],
        &QUALITY_HEADER,
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_make, Provenance};
    use crate::regress::{Regressor, RegressorSpec};

    struct ConstantMean(f64);

    impl Regressor for ConstantMean {
        fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
            Ok(vec![self.0; x.rows()])
        }
    }

    fn constant_mean(ds: &TabularDataset) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(ConstantMean(ds.labels().iter().sum::<f64>() / ds.len() as f64)))
    }

    fn constant_set(n: usize, label: f64, seed: u64) -> TabularDataset {
        let mut rng = SeededRng::new(seed);
        let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.uniform()).collect()).unwrap();
        TabularDataset::unnamed(x, vec![label; n], Provenance::Real).unwrap()
    }

    fn normal_set(n: usize, shift: f64, rng: &mut SeededRng) -> TabularDataset {
        let x = Matrix::from_vec(n, 1, (0..n).map(|_| rng.normal() + shift).collect()).unwrap();
        let y = (0..n).map(|_| rng.normal() + shift).collect();
        TabularDataset::unnamed(x, y, Provenance::Real).unwrap()
    }

    #[test]
    fn two_point_value() {
        let a = Matrix::scalar(0.0);
        let b = Matrix::scalar(1.0);
        let expected = 2.0 - 2.0 * (-0.5f64).exp();
        assert!((mmd2_rows(&a, &b, 1.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn self_distance_vanishes_and_is_symmetric() {
        let mut rng = SeededRng::new(1);
        for _ in 0..5 {
            let a = normal_set(30, 0.0, &mut rng);
            let b = normal_set(25, 0.5, &mut rng);
            let k = KernelSpec::default();
            assert!(mmd2(&a, &a, &k).unwrap() <= 1e-12);
            assert!((mmd2(&a, &b, &k).unwrap() - mmd2(&b, &a, &k).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_set_is_rejected() {
        let a = Matrix::zeros(0, 2);
        assert!(matches!(mmd2_rows(&a, &Matrix::zeros(2, 2), 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn shifted_sample_is_farther() {
        let mut wins = 0;
        for t in 0..20 {
            let mut rng = SeededRng::new(100 + t);
            let a = normal_set(60, 0.0, &mut rng);
            let b = normal_set(60, 0.0, &mut rng);
            let c = normal_set(60, 3.0, &mut rng);
            let k = KernelSpec::default();
            if mmd2(&a, &c, &k).unwrap() > mmd2(&a, &b, &k).unwrap() {
                wins += 1;
            }
        }
        assert_eq!(wins, 20);
    }

    #[test]
    fn constant_predictor_hand_case() {
        // Each fold MAE is |0.6 − 0.4| = 0.2; two folds per direction give
        // 0.4 + 0.4, and 2/K = 1.
        let real = constant_set(10, 0.4, 1);
        let generated = constant_set(10, 0.6, 2);
        let s = diversity_score(&real, &generated, 2, &constant_mean, 7).unwrap();
        assert!((s - 0.8).abs() < 1e-12, "S = {s}");
    }

    #[test]
    fn swapping_arguments_with_mirrored_seeds_is_exact() {
        let real = synth_make("sinusoid-2d", 30, 0.05, 3).unwrap();
        let generated = synth_make("sinusoid-2d", 24, 0.0, 4).unwrap();
        let spec = RegressorSpec::kernel_ridge();
        let seeds = FoldSeeds::derive(11);
        let a = diversity_score_with(&real, &generated, 3, &spec, seeds).unwrap();
        let b = diversity_score_with(&generated, &real, 3, &spec, seeds.mirrored()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_rows_for_folds() {
        let real = constant_set(3, 0.4, 1);
        let generated = constant_set(10, 0.6, 2);
        assert!(matches!(diversity_score(&real, &generated, 5, &constant_mean, 0), Err(Error::Contract(_))));
        assert!(matches!(diversity_score(&generated, &generated, 1, &constant_mean, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn mode_collapse_scores_worse() {
        let real = synth_make("sinusoid-2d", 100, 0.0, 5).unwrap();
        let diverse = synth_make("sinusoid-2d", 100, 0.0, 6).unwrap();
        let collapsed = diverse.select(&[0; 100]);
        let spec = RegressorSpec::kernel_ridge();
        let s_div = diversity_score(&real, &diverse, 5, &spec, 1).unwrap();
        let s_col = diversity_score(&real, &collapsed, 5, &spec, 1).unwrap();
        assert!(s_col > s_div, "collapsed {s_col} vs diverse {s_div}");
    }

    #[test]
    fn folds_partition_rows() {
        let folds = fold_indices(17, 5, 3);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..17).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 3 || f.len() == 4));
    }

    #[test]
    fn single_batch_is_selected() {
        let real = synth_make("sinusoid-2d", 20, 0.0, 1).unwrap();
        let batch = synth_make("sinusoid-2d", 20, 0.0, 2).unwrap();
        let (i, q) = select_best_batch(&real, &[batch], &KernelSpec::default(), 2, &RegressorSpec::kernel_ridge(), 0).unwrap();
        assert_eq!(i, 0);
        assert_eq!(q[0].combined, 0.0);
        assert!(q[0].selected);
    }

    #[test]
    fn copy_of_real_dominates() {
        let real = synth_make("sinusoid-2d", 20, 0.0, 1).unwrap();
        let far = TabularDataset::unnamed(real.features().map(|v| v + 2.0), real.labels().to_vec(), Provenance::Generated).unwrap();
        let (i, q) = select_best_batch(&real, &[far, real.clone()], &KernelSpec::default(), 2, &constant_mean, 0).unwrap();
        assert_eq!(i, 1);
        assert_eq!(q[0].ds, q[1].ds);
        assert!(q[1].mmd2 <= 1e-12);
    }

    fn naive_mmd(a: &Matrix, b: &Matrix, sigma: f64) -> f64 {
        let k = |p: &[f64], q: &[f64]| {
            let d: f64 = p.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum();
            (-d / (2.0 * sigma * sigma)).exp()
        };
        let (n, m) = (a.rows() as f64, b.rows() as f64);
        let mut aa = 0.0;
        let mut ab = 0.0;
        let mut bb = 0.0;
        for i in 0..a.rows() {
            for j in 0..a.rows() {
                aa += k(a.row(i), a.row(j));
            }
            for j in 0..b.rows() {
                ab += k(a.row(i), b.row(j));
            }
        }
        for i in 0..b.rows() {
            for j in 0..b.rows() {
                bb += k(b.row(i), b.row(j));
            }
        }
        (aa / (n * n) - 2.0 * ab / (n * m) + bb / (m * m)).max(0.0)
    }

    fn naive_ds(real: &TabularDataset, gen: &TabularDataset, k: usize, seed: u64) -> f64 {
        let spec = RegressorSpec::kernel_ridge();
        let rf = fold_indices(real.len(), k, derive_seed(seed, FOLD_TAG, 0));
        let gf = fold_indices(gen.len(), k, derive_seed(seed, FOLD_TAG, 1));
        let mut total = 0.0;
        for (train, train_folds, test, test_folds) in [(gen, &gf, real, &rf), (real, &rf, gen, &gf)] {
            for i in 0..k {
                let keep: Vec<usize> = (0..train.len()).filter(|r| !train_folds[i].contains(r)).collect();
                let model = spec.fit(&train.select(&keep)).unwrap();
                let held = test.select(&test_folds[i]);
                let p = model.predict(held.features()).unwrap();
                total += p.iter().zip(held.labels()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
            }
        }
        2.0 / k as f64 * total
    }

    #[test]
    fn selection_matches_naive_scorer() {
        let real = synth_make("sinusoid-2d", 30, 0.02, 1).unwrap();
        let batches: Vec<_> = [(0.0, 2), (0.2, 3), (0.5, 4)]
            .iter()
            .map(|&(noise, seed)| synth_make("sinusoid-2d", 30, noise, seed).unwrap())
            .collect();
        let (best, q) = select_best_batch(&real, &batches, &KernelSpec::default(), 3, &RegressorSpec::kernel_ridge(), 9).unwrap();
        let sigma = Bandwidth::MedianHeuristic.resolve(&[&real.joint()]).unwrap();
        let m: Vec<f64> = batches.iter().map(|b| naive_mmd(&real.joint(), &b.joint(), sigma)).collect();
        let d: Vec<f64> = batches.iter().map(|b| naive_ds(&real, b, 3, 9)).collect();
        let norm = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            v.iter().map(|x| (x - lo) / (hi - lo)).collect::<Vec<_>>()
        };
        let (mn, dn) = (norm(&m), norm(&d));
        let mut naive_best = 0;
        for i in 1..3 {
            if mn[i] + dn[i] < mn[naive_best] + dn[naive_best] {
                naive_best = i;
            }
        }
        assert_eq!(best, naive_best);
        for i in 0..3 {
            assert!((q[i].mmd2 - m[i]).abs() < 1e-12);
            assert!((q[i].ds - d[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn ranks_are_permutations() {
        assert_eq!(ranks(&[0.3, 0.1, 0.3, 0.0]), vec![3, 2, 4, 1]);
    }

    #[test]
    fn quality_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quality.csv");
        let rows = vec![BatchQuality { batch: 0, mmd2: 0.125, ds: 1.0 / 3.0, mmd_rank: 1, ds_rank: 1, combined: 0.0, selected: true }];
        write_quality_csv(&rows, &path).unwrap();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).unwrap();
        assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), QUALITY_HEADER.to_vec());
        let back: Vec<BatchQuality> = reader.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(back, rows);
    }

    proptest::proptest! {
        #[test]
        fn selection_is_permutation_equivariant(shift in 0usize..3, seed in 0u64..50) {
            let real = synth_make("sinusoid-2d", 12, 0.0, seed).unwrap();
            let batches: Vec<_> = (0..3).map(|i| synth_make("sinusoid-2d", 12, 0.1 * i as f64, seed + 1 + i as u64).unwrap()).collect();
            let rotated: Vec<_> = (0..3).map(|i| batches[(i + shift) % 3].clone()).collect();
            let spec = RegressorSpec::kernel_ridge();
            let (a, _) = select_best_batch(&real, &batches, &KernelSpec::default(), 2, &spec, 1).unwrap();
            let (b, _) = select_best_batch(&real, &rotated, &KernelSpec::default(), 2, &spec, 1).unwrap();
            proptest::prop_assert_eq!((b + shift) % 3, a);
        }
    }
}
