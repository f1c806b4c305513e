use serde::{Deserialize, Serialize};

use crate::numeric::{derive_seed, dist, sq_dist, Matrix, SeededRng};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub centroids: Matrix,
    pub assignments: Vec<usize>,
    /// Mean silhouette coefficient in `[-1, 1]`; 0 when `k = 1`.
    pub silhouette: f64,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

fn distinct_rows(points: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = (0..points.rows())
        .map(|r| points.row(r).iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// Index of the centroid nearest to `x`; ties go to the lower index.
fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeding(points: &Matrix, k: usize, rng: &mut SeededRng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.index(n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // unreachable while k ≤ distinct points
            rng.index(n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    points.select_rows(&chosen)
}

/// Lloyd's algorithm from k-means++ seeds; stops when no centroid moves more
/// than 1e-6 or after 100 iterations.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<ClusterResult> {
    let n = points.rows();
    if k == 0 || n == 0 {
        return Err(Error::Degeneracy(format!("k = {k} on {n} points")));
    }
    let distinct = distinct_rows(points);
    if k > distinct {
        return Err(Error::Degeneracy(format!(
            "k = {k} exceeds the {distinct} distinct points"
        )));
    }
    let dim = points.cols();
    let mut rng = SeededRng::new(seed);
    let mut centroids = plus_plus_seeding(points, k, &mut rng);
    let mut assignments = vec![0; n];

    for _ in 0..MAX_ITERATIONS {
        for (i, a) in assignments.iter_mut().enumerate() {
            *a = nearest(points.row(i), &centroids).0;
        }
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, &s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(assignments[a]));
                        let db = sq_dist(points.row(b), centroids.row(assignments[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty");
                next.row_mut(c).copy_from_slice(points.row(far));
            }
        }
        let shift = (0..k)
            .map(|c| dist(next.row(c), centroids.row(c)))
            .fold(0.0, f64::max);
        centroids = next;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, a) in assignments.iter_mut().enumerate() {
        let (c, d) = nearest(points.row(i), &centroids);
        *a = c;
        inertia += d;
    }
    let silhouette = mean_silhouette(points, &assignments, k);
    Ok(ClusterResult {
        k,
        centroids,
        assignments,
        silhouette,
        inertia,
    })
}

/// Best of `restarts` seeded runs by inertia (ties → earliest run).
pub fn kmeans_restarts(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(points, k, derive_seed(seed, 0x6b6d, r as u64))?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Mean silhouette. Points in singleton clusters score 0.
pub fn mean_silhouette(points: &Matrix, assignments: &[usize], k: usize) -> f64 {
    let n = points.rows();
    if k < 2 || n == 0 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += dist(points.row(i), points.row(j));
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// `k` in `range` maximising the mean silhouette; ties go to the smaller `k`.
pub fn choose_k(points: &Matrix, range: std::ops::RangeInclusive<usize>, seed: u64) -> Result<usize> {
    let n = points.rows();
    if range.is_empty() {
        return Err(Error::Contract("empty range of cluster counts".into()));
    }
    if *range.start() < 2 || *range.end() + 1 > n {
        return Err(Error::Contract(format!(
            "cluster counts {range:?} must lie in [2, {}]",
            n.saturating_sub(1)
        )));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for k in range {
        let s = kmeans_restarts(points, k, seed, 5)?.silhouette;
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best.0)
}
