//! k-nearest-neighbor graph with fuzzy membership weights.
//!
//! Exact brute force up to 4096 points; beyond that a neighbor-descent
//! search whose recall is audited against brute force on 100 seeded queries
//! (falling back to brute force if the audit comes in under 0.95).
//!
//! Per-point weights follow the smooth calibration: `rho` is the distance to
//! the nearest (nonzero) neighbor and the bandwidth `sigma` is solved so the
//! weight row sums to log2(k).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{DimRedError, DistanceMetric};
use crate::matrix::{Matrix, cosine_distance, euclidean};

const BRUTE_FORCE_MAX: usize = 4096;
const AUDIT_QUERIES: usize = 100;
const AUDIT_MIN_RECALL: f64 = 0.95;
const AUDIT_SEED: u64 = 0x5eed_a0d1;

/// Symmetrized fuzzy edge between `a < b` with weight in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzyEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborGraph {
    pub k: usize,
    pub metric: DistanceMetric,
    /// Per point: its k nearest `(index, distance)`, ascending by
    /// (distance, index). No self-edges.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    /// Directed fuzzy weights parallel to `neighbors`; each row sums to
    /// log2(k) (up to the bisection tolerance and attainability).
    pub weights: Vec<Vec<f64>>,
    /// Symmetrized unique edges.
    pub edges: Vec<FuzzyEdge>,
    /// Recall measured by the self-audit when approximate search was used;
    /// `None` for the exact path.
    pub audit_recall: Option<f64>,
}

fn distance(metric: DistanceMetric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        DistanceMetric::Euclidean => euclidean(a, b),
        DistanceMetric::Cosine => cosine_distance(a, b),
    }
}

fn brute_force_one(
    x: &Matrix,
    metric: DistanceMetric,
    i: usize,
    k: usize,
) -> Vec<(usize, f64)> {
    let mut dists: Vec<(f64, usize)> = (0..x.rows())
        .filter(|&j| j != i)
        .map(|j| (distance(metric, x.row(i), x.row(j)), j))
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    dists.truncate(k);
    dists.into_iter().map(|(d, j)| (j, d)).collect()
}

fn brute_force_all(x: &Matrix, metric: DistanceMetric, k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..x.rows()).map(|i| brute_force_one(x, metric, i, k)).collect()
}

/// Neighbor-descent: start from random neighbor lists and repeatedly let
/// each point introduce its neighbors to each other.
fn nn_descent(x: &Matrix, metric: DistanceMetric, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = x.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED ^ 0x00ff);
    // sorted candidate lists capped at k
    let mut lists: Vec<Vec<(f64, usize)>> = (0..n)
        .map(|i| {
            let mut picks = Vec::with_capacity(k);
            while picks.len() < k {
                let j = rng.random_range(0..n);
                if j != i && !picks.contains(&j) {
                    picks.push(j);
                }
            }
            let mut l: Vec<(f64, usize)> =
                picks.into_iter().map(|j| (distance(metric, x.row(i), x.row(j)), j)).collect();
            l.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            l
        })
        .collect();

    let try_insert = |lists: &mut Vec<Vec<(f64, usize)>>, i: usize, j: usize, d: f64| -> bool {
        let l = &mut lists[i];
        if l.iter().any(|&(_, idx)| idx == j) {
            return false;
        }
        let worst = l.last().map(|&(d, _)| d).unwrap_or(f64::INFINITY);
        if l.len() >= k && d >= worst {
            return false;
        }
        let pos = l
            .binary_search_by(|probe| {
                probe.0.partial_cmp(&d).unwrap().then(probe.1.cmp(&j))
            })
            .unwrap_or_else(|p| p);
        l.insert(pos, (d, j));
        l.truncate(k);
        true
    };

    for _round in 0..30 {
        // forward + sampled reverse candidates per node
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, l) in lists.iter().enumerate() {
            for &(_, j) in l {
                reverse[j].push(i);
            }
        }
        let mut updates = 0usize;
        for v in 0..n {
            let mut cand: Vec<usize> = lists[v].iter().map(|&(_, j)| j).collect();
            let mut rev = reverse[v].clone();
            rev.shuffle(&mut rng);
            rev.truncate(k);
            cand.extend(rev);
            cand.sort_unstable();
            cand.dedup();
            for ai in 0..cand.len() {
                for bi in (ai + 1)..cand.len() {
                    let (p, q) = (cand[ai], cand[bi]);
                    let d = distance(metric, x.row(p), x.row(q));
                    if try_insert(&mut lists, p, q, d) {
                        updates += 1;
                    }
                    if try_insert(&mut lists, q, p, d) {
                        updates += 1;
                    }
                }
            }
        }
        if updates < (n * k) / 1000 + 1 {
            break;
        }
    }
    lists
        .into_iter()
        .map(|l| l.into_iter().map(|(d, j)| (j, d)).collect())
        .collect()
}

/// Recall of `approx` against brute force on a seeded sample of queries.
fn audit_recall(
    x: &Matrix,
    metric: DistanceMetric,
    k: usize,
    approx: &[Vec<(usize, f64)>],
) -> f64 {
    let n = x.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
    let mut queries: Vec<usize> = (0..n).collect();
    queries.shuffle(&mut rng);
    queries.truncate(AUDIT_QUERIES.min(n));
    let mut total = 0.0;
    for &q in &queries {
        let truth = brute_force_one(x, metric, q, k);
        let found = approx[q]
            .iter()
            .filter(|(j, _)| truth.iter().any(|(t, _)| t == j))
            .count();
        total += found as f64 / k as f64;
    }
    total / queries.len() as f64
}

/// Bandwidth calibration: bisect sigma so that
/// `sum_j exp(-max(d_j - rho, 0) / sigma) = log2(k)`.
fn smooth_bandwidth(dists: &[f64], rho: f64, target: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut mid = 1.0f64;
    for _ in 0..64 {
        let sum: f64 = dists.iter().map(|&d| (-((d - rho).max(0.0)) / mid).exp()).sum();
        if (sum - target).abs() < 1e-6 {
            break;
        }
        if sum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    mid.max(1e-12)
}

/// Builds the k-NN graph with fuzzy weights. Duplicate points are allowed;
/// distance ties break by index order.
pub fn knn_graph(
    x: &Matrix,
    k: usize,
    metric: DistanceMetric,
) -> Result<NeighborGraph, DimRedError> {
    let n = x.rows();
    if k == 0 {
        return Err(DimRedError::BadParam("k must be at least 1".into()));
    }
    if k >= n {
        return Err(DimRedError::KTooLarge { k, n });
    }
    if !x.all_finite() {
        return Err(DimRedError::NonFiniteInput);
    }

    let (neighbors, recall) = if n <= BRUTE_FORCE_MAX {
        (brute_force_all(x, metric, k), None)
    } else {
        let approx = nn_descent(x, metric, k);
        let recall = audit_recall(x, metric, k, &approx);
        if recall >= AUDIT_MIN_RECALL {
            (approx, Some(recall))
        } else {
            log::warn!(
                "approximate neighbor recall {recall:.3} below {AUDIT_MIN_RECALL}; \
                 falling back to brute force"
            );
            (brute_force_all(x, metric, k), Some(1.0))
        }
    };

    // fuzzy weights per row
    let target = (k as f64).log2();
    let mut weights = Vec::with_capacity(n);
    for row in &neighbors {
        let dists: Vec<f64> = row.iter().map(|&(_, d)| d).collect();
        let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        let sigma = smooth_bandwidth(&dists, rho, target);
        weights.push(
            dists.iter().map(|&d| (-((d - rho).max(0.0)) / sigma).exp()).collect::<Vec<f64>>(),
        );
    }

    // symmetrize: w_ab + w_ba - w_ab * w_ba over unordered pairs
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in neighbors.iter().enumerate() {
        for (slot, &(j, _)) in row.iter().enumerate() {
            directed.insert((i, j), weights[i][slot]);
        }
    }
    let mut edges = Vec::new();
    for (&(i, j), &w_ij) in &directed {
        if i > j && directed.contains_key(&(j, i)) {
            continue; // handled from the (j, i) side
        }
        let w_ji = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        edges.push(FuzzyEdge { a, b, weight: w_ij + w_ji - w_ij * w_ji });
    }

    Ok(NeighborGraph { k, metric, neighbors, weights, edges, audit_recall: recall })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(v: &[f64]) -> Matrix {
        Matrix::from_rows(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    #[test]
    fn hand_neighbors_on_a_line() {
        let x = points_1d(&[0.0, 1.0, 10.0]);
        let g = knn_graph(&x, 1, DistanceMetric::Euclidean).unwrap();
        assert_eq!(g.neighbors[0][0].0, 1);
        assert_eq!(g.neighbors[1][0].0, 0);
        assert_eq!(g.neighbors[2][0].0, 1);
        assert_eq!(g.neighbors[2][0].1, 9.0);
    }

    #[test]
    fn k_equals_n_minus_one_is_complete() {
        let x = points_1d(&[0.0, 2.0, 5.0, 9.0]);
        let g = knn_graph(&x, 3, DistanceMetric::Euclidean).unwrap();
        for (i, row) in g.neighbors.iter().enumerate() {
            assert_eq!(row.len(), 3);
            assert!(row.iter().all(|&(j, _)| j != i));
        }
        // every unordered pair appears
        assert_eq!(g.edges.len(), 6);
    }

    #[test]
    fn k_equals_n_rejected() {
        let x = points_1d(&[0.0, 1.0]);
        assert!(matches!(
            knn_graph(&x, 2, DistanceMetric::Euclidean),
            Err(DimRedError::KTooLarge { k: 2, n: 2 })
        ));
    }

    #[test]
    fn weight_rows_sum_to_log2_k() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> =
            (0..80).map(|_| (0..5).map(|_| rng.random::<f64>() * 4.0).collect()).collect();
        let x = Matrix::from_rows(&rows);
        for k in [4usize, 8, 15] {
            let g = knn_graph(&x, k, DistanceMetric::Euclidean).unwrap();
            let target = (k as f64).log2();
            for row in &g.weights {
                let sum: f64 = row.iter().sum();
                assert!((sum - target).abs() < 1e-3, "k={k}: row sum {sum} vs {target}");
            }
        }
    }

    #[test]
    fn symmetrized_weights_in_unit_interval() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let g = knn_graph(&x, 6, DistanceMetric::Cosine).unwrap();
        for e in &g.edges {
            assert!(e.a < e.b);
            assert!(e.weight > 0.0 && e.weight <= 1.0 + 1e-12, "weight {}", e.weight);
        }
    }

    #[test]
    fn duplicate_points_tie_break_by_index() {
        let x = points_1d(&[1.0, 1.0, 1.0, 5.0]);
        let g = knn_graph(&x, 2, DistanceMetric::Euclidean).unwrap();
        assert_eq!(g.neighbors[0].iter().map(|&(j, _)| j).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(g.neighbors[1].iter().map(|&(j, _)| j).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn approximate_path_meets_recall_audit() {
        // just over the brute-force cutoff: three Gaussian shells
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = BRUTE_FORCE_MAX + 60;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let c = (i % 3) as f64 * 8.0;
                (0..6).map(|_| c + rng.random::<f64>()).collect()
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let g = knn_graph(&x, 10, DistanceMetric::Euclidean).unwrap();
        let recall = g.audit_recall.expect("approximate path must audit itself");
        assert!(recall >= AUDIT_MIN_RECALL, "recall {recall}");
    }
}
