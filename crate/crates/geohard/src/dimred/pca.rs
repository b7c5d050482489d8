//! Deterministic PCA via orthogonal (subspace) iteration on the covariance
//! operator, finished with a Rayleigh-Ritz rotation. The covariance matrix
//! is never formed; each step costs O(n * d * E).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DimRedError, ReduceMethod, ReducedMatrix};
use crate::matrix::{Matrix, dot};

/// Internal seed for the iteration's starting basis; PCA takes no seed
/// parameter and must be reproducible on its own.
const INIT_SEED: u64 = 0x9e37_79b9;
const MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub struct PcaOutput {
    pub reduced: ReducedMatrix,
    /// Fraction of total variance captured per component; non-increasing,
    /// sums to at most 1.
    pub explained_variance_ratio: Vec<f64>,
    /// Components beyond the data rank were zero-padded.
    pub rank_deficient: bool,
}

/// Centers the data (optionally), projects onto the top-`e` principal
/// directions, and reports explained-variance ratios. Component signs follow
/// the convention that each component's largest-magnitude coordinate is
/// positive.
pub fn pca_fit_transform(
    ids: &[String],
    x: &Matrix,
    e: usize,
    center: bool,
) -> Result<PcaOutput, DimRedError> {
    let (n, d) = (x.rows(), x.cols());
    if ids.len() != n {
        return Err(DimRedError::IdsMismatch { ids: ids.len(), rows: n });
    }
    if n < 2 {
        return Err(DimRedError::TooFewPoints { n, needed: 2 });
    }
    if !x.all_finite() {
        return Err(DimRedError::NonFiniteInput);
    }
    let max_e = d.min(n - 1);
    if e == 0 || e > max_e {
        return Err(DimRedError::RangeE { e, max: max_e });
    }

    let mean = if center { x.column_means() } else { vec![0.0; d] };
    let centered_row = |i: usize| -> Vec<f64> {
        x.row(i).iter().zip(&mean).map(|(v, m)| v - m).collect()
    };
    let total_var: f64 =
        (0..n).map(|i| centered_row(i).iter().map(|v| v * v).sum::<f64>()).sum::<f64>()
            / n as f64;

    // covariance matvec without materializing the covariance
    let matvec = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for i in 0..n {
            let row = centered_row(i);
            let proj = dot(&row, v);
            for (o, r) in out.iter_mut().zip(&row) {
                *o += proj * r;
            }
        }
        for o in &mut out {
            *o /= n as f64;
        }
        out
    };

    // starting basis: seeded pseudorandom, orthonormalized
    let mut rng = ChaCha8Rng::seed_from_u64(INIT_SEED);
    let mut basis: Vec<Vec<f64>> =
        (0..e).map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    orthonormalize(&mut basis);

    let mut prev_evals = vec![f64::INFINITY; e];
    if total_var > 0.0 {
        for _ in 0..MAX_ITER {
            let mut next: Vec<Vec<f64>> = basis.iter().map(|q| matvec(q)).collect();
            let evals: Vec<f64> =
                basis.iter().zip(&next).map(|(q, cq)| dot(q, cq)).collect();
            orthonormalize(&mut next);
            basis = next;
            let converged = evals.iter().zip(&prev_evals).all(|(a, b)| {
                (a - b).abs() <= 1e-13 * total_var.max(1e-300)
            });
            prev_evals = evals;
            if converged {
                break;
            }
        }
    }

    // Rayleigh-Ritz: rotate the basis into eigenvectors of the projected
    // e x e problem
    let images: Vec<Vec<f64>> = basis.iter().map(|q| matvec(q)).collect();
    let mut b = Matrix::zeros(e, e);
    for i in 0..e {
        for j in 0..e {
            b.set(i, j, dot(&basis[i], &images[j]));
        }
    }
    // symmetrize against round-off
    for i in 0..e {
        for j in (i + 1)..e {
            let avg = 0.5 * (b.get(i, j) + b.get(j, i));
            b.set(i, j, avg);
            b.set(j, i, avg);
        }
    }
    let (mut evals, rot) = jacobi_eigen(&b);
    let mut order: Vec<usize> = (0..e).collect();
    order.sort_by(|&a, &bb| evals[bb].partial_cmp(&evals[a]).unwrap());
    evals = order.iter().map(|&i| evals[i]).collect();
    let mut components: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| {
            let mut v = vec![0.0; d];
            for (i, q) in basis.iter().enumerate() {
                let w = rot.get(i, col);
                for (vv, qq) in v.iter_mut().zip(q) {
                    *vv += w * qq;
                }
            }
            v
        })
        .collect();

    // zero-pad components past the data rank
    let tol = 1e-12 * total_var.max(1e-300);
    let mut rank_deficient = false;
    for (c, lambda) in evals.iter_mut().enumerate() {
        if *lambda <= tol {
            if !rank_deficient {
                log::warn!(
                    "input rank below target dimension; zero-padding components {c}..{e}"
                );
            }
            rank_deficient = true;
            *lambda = 0.0;
            components[c] = vec![0.0; d];
        }
    }

    // sign convention: largest-magnitude coordinate positive
    for comp in &mut components {
        let mut arg = 0usize;
        for (j, v) in comp.iter().enumerate() {
            if v.abs() > comp[arg].abs() {
                arg = j;
            }
        }
        if comp[arg] < 0.0 {
            for v in comp.iter_mut() {
                *v = -*v;
            }
        }
    }

    let explained_variance_ratio: Vec<f64> = evals
        .iter()
        .map(|&l| if total_var > 0.0 { (l / total_var).max(0.0) } else { 0.0 })
        .collect();

    let mut coords = Matrix::zeros(n, e);
    for i in 0..n {
        let row = centered_row(i);
        for (c, comp) in components.iter().enumerate() {
            coords.set(i, c, dot(&row, comp));
        }
    }

    let params = serde_json::json!({
        "e": e,
        "center": center,
        "explained_variance_ratio": explained_variance_ratio,
        "rank_deficient": rank_deficient,
    });
    Ok(PcaOutput {
        reduced: ReducedMatrix {
            ids: ids.to_vec(),
            coords,
            method: ReduceMethod::Pca,
            seed: 0,
            params,
        },
        explained_variance_ratio,
        rank_deficient,
    })
}

/// Modified Gram-Schmidt with re-orthogonalization; degenerate columns are
/// replaced by the first canonical basis vector that survives projection,
/// keeping the result deterministic.
fn orthonormalize(basis: &mut [Vec<f64>]) {
    let d = basis.first().map_or(0, Vec::len);
    for c in 0..basis.len() {
        for _ in 0..2 {
            for p in 0..c {
                let proj = dot(&basis[c], &basis[p]);
                let prev = basis[p].clone();
                for (v, q) in basis[c].iter_mut().zip(&prev) {
                    *v -= proj * q;
                }
            }
        }
        let norm = basis[c].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for v in &mut basis[c] {
                *v /= norm;
            }
            continue;
        }
        // degenerate: substitute a canonical vector
        let mut replaced = false;
        for axis in 0..d {
            let mut cand = vec![0.0; d];
            cand[axis] = 1.0;
            for p in 0..c {
                let proj = dot(&cand, &basis[p]);
                for (v, q) in cand.iter_mut().zip(&basis[p]) {
                    *v -= proj * q;
                }
            }
            let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for v in &mut cand {
                    *v /= norm;
                }
                basis[c] = cand;
                replaced = true;
                break;
            }
        }
        assert!(replaced, "cannot extend orthonormal basis beyond dimension");
    }
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix; returns
/// (eigenvalues, column eigenvectors).
fn jacobi_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j).powi(2);
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (mip, miq) = (m.get(i, p), m.get(i, q));
                    m.set(i, p, c * mip - s * miq);
                    m.set(i, q, s * mip + c * miq);
                }
                for i in 0..n {
                    let (mpi, mqi) = (m.get(p, i), m.get(q, i));
                    m.set(p, i, c * mpi - s * mqi);
                    m.set(q, i, s * mpi + c * mqi);
                }
                for i in 0..n {
                    let (vip, viq) = (v.get(i, p), v.get(i, q));
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }
    ((0..n).map(|i| m.get(i, i)).collect(), v)
}

fn frobenius(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::euclidean;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn line_collapses_to_one_component() {
        // points on y = x: full 2-D decomposition has a zero second ratio
        // and the 1-D coordinates preserve pairwise distances exactly
        let pts: Vec<Vec<f64>> = [-2.0, -0.5, 0.0, 1.0, 3.0].iter().map(|&t| vec![t, t]).collect();
        let x = Matrix::from_rows(&pts);
        let full = pca_fit_transform(&ids(5), &x, 2, true).unwrap();
        assert!(full.explained_variance_ratio[1].abs() < 1e-12);
        assert!(full.rank_deficient);
        assert!((full.explained_variance_ratio[0] - 1.0).abs() < 1e-9);

        let one = pca_fit_transform(&ids(5), &x, 1, true).unwrap();
        let c = &one.reduced.coords;
        for i in 0..5 {
            for j in (i + 1)..5 {
                let orig = euclidean(x.row(i), x.row(j));
                let red = (c.get(i, 0) - c.get(j, 0)).abs();
                assert!((orig - red).abs() < 1e-9, "{orig} vs {red}");
            }
        }
    }

    #[test]
    fn full_dimension_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> =
            (0..20).map(|_| (0..4).map(|_| rng.random::<f64>() * 3.0).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let out = pca_fit_transform(&ids(20), &x, 4, true).unwrap();
        let y = &out.reduced.coords;
        for i in 0..20 {
            for j in (i + 1)..20 {
                let a = euclidean(x.row(i), x.row(j));
                let b = euclidean(y.row(i), y.row(j));
                assert!((a - b).abs() < 1e-9, "pair ({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_dimension() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(
            pca_fit_transform(&ids(3), &x, 3, true),
            Err(DimRedError::RangeE { e: 3, max: 2 })
        ));
        assert!(matches!(
            pca_fit_transform(&ids(3), &x, 0, true),
            Err(DimRedError::RangeE { .. })
        ));
    }

    #[test]
    fn translation_invariant_when_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> =
            (0..15).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let shifted = Matrix::from_rows(
            &rows.iter().map(|r| r.iter().map(|v| v + 123.0).collect()).collect::<Vec<_>>(),
        );
        let a = pca_fit_transform(&ids(15), &x, 2, true).unwrap();
        let b = pca_fit_transform(&ids(15), &shifted, 2, true).unwrap();
        for i in 0..15 {
            for j in 0..2 {
                assert!(
                    (a.reduced.coords.get(i, j) - b.reduced.coords.get(i, j)).abs() < 1e-9
                );
            }
        }
    }

    #[test]
    fn ratios_non_increasing_and_sum_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                vec![
                    rng.random::<f64>() * 5.0,
                    rng.random::<f64>() * 2.0,
                    rng.random::<f64>() * 0.3,
                ]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let out = pca_fit_transform(&ids(30), &x, 3, true).unwrap();
        let r = &out.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        assert!(r.iter().sum::<f64>() <= 1.0 + 1e-9);
    }

    #[test]
    fn matches_hand_eigendecomposition_2x2() {
        // covariance of {(0,0),(2,2)} centered: [[1,1],[1,1]] -> eigenvalues
        // 2 and 0, first component (1,1)/sqrt(2)
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]);
        let out = pca_fit_transform(&ids(2), &x, 1, true).unwrap();
        // coords: +-sqrt(2)
        let c0 = out.reduced.coords.get(0, 0);
        let c1 = out.reduced.coords.get(1, 0);
        assert!((c0 + 2.0f64.sqrt()).abs() < 1e-9, "c0 = {c0}");
        assert!((c1 - 2.0f64.sqrt()).abs() < 1e-9, "c1 = {c1}");
        assert!((out.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<Vec<f64>> =
            (0..25).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let x = Matrix::from_rows(&rows);
        let a = pca_fit_transform(&ids(25), &x, 2, true).unwrap();
        let b = pca_fit_transform(&ids(25), &x, 2, true).unwrap();
        assert_eq!(a.reduced.coords.as_slice(), b.reduced.coords.as_slice());
    }
}
