//! Seeded, deterministic KMeans (k-means++ init, Lloyd iterations).
//!
//! Ties in assignment and medoid selection break toward the lower index;
//! empty clusters are repaired by reseeding to the point farthest from its
//! assigned centroid. Fixed `(data, k, seed)` gives a bit-identical model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::{Matrix, euclidean_sq};

/// Seeds used by multi-seed consumers (Thrust averaging, reorg reporting).
pub const DEFAULT_SEEDS: [u64; 5] = [2, 4, 42, 102, 144];

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum KMeansError {
    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("model dimension {model} does not match data dimension {data}")]
    DimMismatch { model: usize, data: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct KMeansModel {
    /// k x d cluster centers.
    pub centroids: Matrix,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    /// Sum of squared Euclidean distances to assigned centroids.
    pub inertia: f64,
    pub iterations_run: usize,
    pub seed: u64,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_trace: Vec<f64>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }
}

fn nearest_centroid(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, row) in centroids.iter_rows().enumerate() {
        let d = euclidean_sq(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));

    let mut dist_sq: Vec<f64> =
        (0..n).map(|i| euclidean_sq(x.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist_sq.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining points coincide with chosen centers
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(chosen));
        for i in 0..n {
            let d = euclidean_sq(x.row(i), centroids.row(c));
            if d < dist_sq[i] {
                dist_sq[i] = d;
            }
        }
    }
    centroids
}

pub fn kmeans_fit(x: &Matrix, k: usize, seed: u64) -> Result<KMeansModel, KMeansError> {
    kmeans_fit_with(x, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)
}

pub fn kmeans_fit_with(
    x: &Matrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel, KMeansError> {
    let n = x.rows();
    if k == 0 {
        return Err(KMeansError::KZero);
    }
    if k > n {
        return Err(KMeansError::KTooLarge { k, n });
    }
    if !x.all_finite() {
        return Err(KMeansError::NonFinite);
    }
    let d = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut trace = Vec::new();
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        iterations_run += 1;
        // assignment step
        let mut new_inertia = 0.0;
        for i in 0..n {
            let (c, dist) = nearest_centroid(x.row(i), &centroids);
            assignments[i] = c;
            new_inertia += dist;
        }

        // repair empty clusters: seize the point farthest from its centroid
        loop {
            let mut sizes = vec![0usize; k];
            for &a in &assignments {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
            let farthest = (0..n)
                .max_by(|&a, &b| {
                    let da = euclidean_sq(x.row(a), centroids.row(assignments[a]));
                    let db = euclidean_sq(x.row(b), centroids.row(assignments[b]));
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("n >= k >= 1");
            assignments[farthest] = empty;
            centroids.row_mut(empty).copy_from_slice(x.row(farthest));
        }

        // update step
        let mut sums = Matrix::zeros(k, d);
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            let c = assignments[i];
            sizes[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            debug_assert!(sizes[c] > 0, "empty cluster after repair");
            let inv = 1.0 / sizes[c] as f64;
            let old = centroids.row(c).to_vec();
            for (j, s) in sums.row(c).iter().enumerate() {
                centroids.set(c, j, s * inv);
            }
            shift = shift.max(euclidean_sq(&old, centroids.row(c)).sqrt());
        }

        // recompute inertia against the updated centroids
        let mut cur = 0.0;
        for i in 0..n {
            cur += euclidean_sq(x.row(i), centroids.row(assignments[i]));
        }
        debug_assert!(
            cur <= new_inertia + 1e-9 && cur <= inertia + 1e-9,
            "inertia increased during Lloyd iteration"
        );
        inertia = cur;
        trace.push(cur);
        if shift < tol {
            break;
        }
    }

    Ok(KMeansModel {
        centroids,
        assignments,
        inertia,
        iterations_run,
        seed,
        inertia_trace: trace,
    })
}

/// For each cluster, the index of the member closest to the centroid; ties
/// break toward the smaller index.
pub fn nearest_to_centroid(x: &Matrix, model: &KMeansModel) -> Result<Vec<usize>, KMeansError> {
    if x.cols() != model.centroids.cols() {
        return Err(KMeansError::DimMismatch { model: model.centroids.cols(), data: x.cols() });
    }
    let k = model.k();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, &c) in model.assignments.iter().enumerate() {
        let d = euclidean_sq(x.row(i), model.centroids.row(c));
        let better = match best[c] {
            None => true,
            Some((_, bd)) => d < bd,
        };
        if better {
            best[c] = Some((i, d));
        }
    }
    Ok(best
        .into_iter()
        .map(|b| b.expect("fitted model has no empty clusters").0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(v: &[f64]) -> Matrix {
        Matrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    #[test]
    fn two_separable_singletons() {
        let x = points_1d(&[0.0, 10.0]);
        let m = kmeans_fit(&x, 2, 42).unwrap();
        let mut cents: Vec<f64> = (0..2).map(|c| m.centroids.get(c, 0)).collect();
        cents.sort_by(f64::total_cmp);
        assert_eq!(cents, vec![0.0, 10.0]);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn unit_square_single_cluster() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ]);
        let m = kmeans_fit(&x, 1, 7).unwrap();
        assert!((m.centroids.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((m.centroids.get(0, 1) - 0.5).abs() < 1e-12);
        assert!((m.inertia - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_pairs_split_correctly() {
        let x = points_1d(&[0.0, 1.0, 9.0, 10.0]);
        let m = kmeans_fit(&x, 2, 42).unwrap();
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_eq!(m.assignments[2], m.assignments[3]);
        assert_ne!(m.assignments[0], m.assignments[2]);
        let mut cents: Vec<f64> = (0..2).map(|c| m.centroids.get(c, 0)).collect();
        cents.sort_by(f64::total_cmp);
        assert!((cents[0] - 0.5).abs() < 1e-12 && (cents[1] - 9.5).abs() < 1e-12);
        assert!((m.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k1_centroid_is_mean_and_inertia_is_covariance_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> =
            (0..40).map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let m = kmeans_fit(&x, 1, 0).unwrap();
        let mean = x.column_means();
        for j in 0..3 {
            assert!((m.centroids.get(0, j) - mean[j]).abs() < 1e-9);
        }
        let n = x.rows() as f64;
        let trace: f64 = (0..3)
            .map(|j| {
                x.iter_rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n
            })
            .sum();
        assert!((m.inertia - n * trace).abs() < 1e-9 * m.inertia.max(1.0));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> =
            (0..30).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let a = kmeans_fit(&x, 3, 42).unwrap();
        let b = kmeans_fit(&x, 3, 42).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids.as_slice(), b.centroids.as_slice());
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn inertia_trace_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> =
            (0..60).map(|_| (0..2).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
        let x = Matrix::from_rows(&rows);
        for seed in DEFAULT_SEEDS {
            let m = kmeans_fit(&x, 4, seed).unwrap();
            for w in m.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "trace increased: {:?}", w);
            }
        }
    }

    #[test]
    fn rejects_k_larger_than_n() {
        let x = points_1d(&[1.0, 2.0]);
        assert!(matches!(kmeans_fit(&x, 3, 0), Err(KMeansError::KTooLarge { .. })));
    }

    #[test]
    fn medoid_tie_breaks_to_lower_index() {
        let x = points_1d(&[0.0, 10.0]);
        let m = kmeans_fit(&x, 1, 0).unwrap();
        // centroid 5.0 is equidistant; index 0 wins
        assert_eq!(nearest_to_centroid(&x, &m).unwrap(), vec![0]);
    }

    #[test]
    fn medoid_of_singleton_and_hand_case() {
        let x = points_1d(&[0.0, 1.0, 9.0]);
        let m = kmeans_fit(&x, 1, 0).unwrap();
        // centroid 10/3; member 1 is closest
        assert_eq!(nearest_to_centroid(&x, &m).unwrap(), vec![1]);

        let x = points_1d(&[4.0]);
        let m = kmeans_fit(&x, 1, 0).unwrap();
        assert_eq!(nearest_to_centroid(&x, &m).unwrap(), vec![0]);
    }

    #[test]
    fn medoid_rejects_dim_mismatch() {
        let x = points_1d(&[0.0, 1.0]);
        let m = kmeans_fit(&x, 1, 0).unwrap();
        let other = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(
            nearest_to_centroid(&other, &m),
            Err(KMeansError::DimMismatch { .. })
        ));
    }
}
