//! Desk-scale reference classifier: full-batch softmax regression on
//! embedding vectors, with per-class one-vs-rest F1 on a held-out split.
//!
//! This stands in for the fine-tuned reference models that produce class-wise
//! F1 at full scale; it is deliberately the cheapest model family that
//! yields a class-F1 vector.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::AnalysisError;
use crate::dataset::Split;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty on non-bias weights.
    pub l2: f64,
}

impl Default for ReferenceHyper {
    fn default() -> Self {
        Self { learning_rate: 0.5, epochs: 300, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceModel {
    pub classes: Vec<String>,
    /// K x (d+1) weights; the last column is the bias.
    pub weights: Matrix,
    pub hyper: ReferenceHyper,
    pub seed: u64,
    /// Per-class F1 on the evaluation split, in class order.
    pub f1: Vec<f64>,
    pub train_loss: f64,
}

impl ReferenceModel {
    /// Predicted class index for one (un-augmented) feature vector.
    pub fn predict(&self, features: &[f64]) -> usize {
        let k = self.weights.rows();
        let mut best = (0usize, f64::NEG_INFINITY);
        for c in 0..k {
            let w = self.weights.row(c);
            let logit =
                w[..features.len()].iter().zip(features).map(|(a, b)| a * b).sum::<f64>()
                    + w[features.len()];
            if logit > best.1 {
                best = (c, logit);
            }
        }
        best.0
    }
}

/// Mean cross-entropy (with L2 penalty on non-bias weights) and its gradient
/// for augmented rows `x` (bias column of ones appended by the caller) and
/// integer labels `y`.
pub fn softmax_loss_and_gradient(
    weights: &Matrix,
    x: &Matrix,
    y: &[usize],
    l2: f64,
) -> (f64, Matrix) {
    let n = x.rows();
    let k = weights.rows();
    let d = weights.cols();
    debug_assert_eq!(x.cols(), d);
    debug_assert_eq!(y.len(), n);

    let mut loss = 0.0;
    let mut grad = Matrix::zeros(k, d);
    let mut logits = vec![0.0f64; k];
    for i in 0..n {
        let row = x.row(i);
        for c in 0..k {
            logits[c] = weights.row(c).iter().zip(row).map(|(a, b)| a * b).sum();
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        loss -= logits[y[i]] - log_z;
        for c in 0..k {
            let p = (logits[c] - log_z).exp();
            let delta = p - if c == y[i] { 1.0 } else { 0.0 };
            for (g, v) in grad.row_mut(c).iter_mut().zip(row) {
                *g += delta * v;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    loss *= inv_n;
    // L2 penalty on everything except the bias column
    let mut penalty = 0.0;
    for c in 0..k {
        for j in 0..d {
            let mut g = grad.get(c, j) * inv_n;
            if j + 1 < d {
                let w = weights.get(c, j);
                g += l2 * w;
                penalty += w * w;
            }
            grad.set(c, j, g);
        }
    }
    loss += 0.5 * l2 * penalty;
    (loss, grad)
}

fn augment(x: &Matrix, rows: &[usize]) -> Matrix {
    let d = x.cols();
    let mut data = Vec::with_capacity(rows.len() * (d + 1));
    for &i in rows {
        data.extend_from_slice(x.row(i));
        data.push(1.0);
    }
    Matrix::from_flat(rows.len(), d + 1, data)
}

/// Trains softmax regression with full-batch gradient descent on the train
/// split and reports per-class F1 on the test split. Deterministic per seed.
pub fn train_reference(
    x: &Matrix,
    labels: &[String],
    splits: &[Split],
    classes: &[String],
    hyper: &ReferenceHyper,
    seed: u64,
) -> Result<ReferenceModel, AnalysisError> {
    if labels.len() != x.rows() || splits.len() != x.rows() {
        return Err(AnalysisError::LengthMismatch(x.rows(), labels.len().min(splits.len())));
    }
    let class_index = |l: &str| -> Result<usize, AnalysisError> {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| AnalysisError::UnknownClass(l.to_string()))
    };
    let train_rows: Vec<usize> =
        (0..x.rows()).filter(|&i| splits[i] == Split::Train).collect();
    let eval_rows: Vec<usize> = (0..x.rows()).filter(|&i| splits[i] == Split::Test).collect();
    for (rows, split) in [(&train_rows, Split::Train), (&eval_rows, Split::Test)] {
        for class in classes {
            if !rows.iter().any(|&i| &labels[i] == class) {
                return Err(AnalysisError::ClassAbsentFromSplit {
                    class: class.clone(),
                    split,
                });
            }
        }
    }

    let x_train = augment(x, &train_rows);
    let y_train: Vec<usize> =
        train_rows.iter().map(|&i| class_index(&labels[i])).collect::<Result<_, _>>()?;

    let k = classes.len();
    let d = x.cols() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Matrix::zeros(k, d);
    for c in 0..k {
        for j in 0..d {
            weights.set(c, j, (rng.random::<f64>() - 0.5) * 0.02);
        }
    }

    let mut loss = f64::INFINITY;
    for epoch in 0..hyper.epochs {
        let (l, grad) = softmax_loss_and_gradient(&weights, &x_train, &y_train, hyper.l2);
        if !l.is_finite() {
            return Err(AnalysisError::Diverged { epoch });
        }
        loss = l;
        for c in 0..k {
            for j in 0..d {
                weights.set(c, j, weights.get(c, j) - hyper.learning_rate * grad.get(c, j));
            }
        }
    }

    let model = ReferenceModel {
        classes: classes.to_vec(),
        weights,
        hyper: hyper.clone(),
        seed,
        f1: Vec::new(),
        train_loss: loss,
    };
    let predictions: Vec<String> =
        eval_rows.iter().map(|&i| classes[model.predict(x.row(i))].clone()).collect();
    let golds: Vec<String> = eval_rows.iter().map(|&i| labels[i].clone()).collect();
    let f1 = class_f1(&predictions, &golds, classes)?;
    Ok(ReferenceModel { f1: f1.f1, ..model })
}

/// One-vs-rest F1 per class.
#[derive(Debug, Clone, Serialize)]
pub struct ClassF1 {
    pub classes: Vec<String>,
    pub f1: Vec<f64>,
    /// Class absent from both predictions and golds; its F1 of 0 is a
    /// convention, not a measurement.
    pub degenerate: Vec<bool>,
}

impl ClassF1 {
    pub fn macro_f1(&self) -> f64 {
        self.f1.iter().sum::<f64>() / self.f1.len().max(1) as f64
    }
}

/// Per-class F1 from the confusion matrix; F1 = 0 when precision + recall
/// is 0.
pub fn class_f1(
    predictions: &[String],
    golds: &[String],
    classes: &[String],
) -> Result<ClassF1, AnalysisError> {
    if predictions.len() != golds.len() {
        return Err(AnalysisError::LengthMismatch(predictions.len(), golds.len()));
    }
    let index = |l: &String| -> Result<usize, AnalysisError> {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| AnalysisError::UnknownClass(l.clone()))
    };
    let k = classes.len();
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (p, g) in predictions.iter().zip(golds) {
        let (pi, gi) = (index(p)?, index(g)?);
        if pi == gi {
            tp[pi] += 1;
        } else {
            fp[pi] += 1;
            fn_[gi] += 1;
        }
    }
    let mut f1 = Vec::with_capacity(k);
    let mut degenerate = Vec::with_capacity(k);
    for c in 0..k {
        let seen = tp[c] + fp[c] + fn_[c] > 0;
        degenerate.push(!seen);
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        f1.push(if denom == 0 { 0.0 } else { 2.0 * tp[c] as f64 / denom as f64 });
    }
    Ok(ClassF1 { classes: classes.to_vec(), f1, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn f1_perfect_predictions() {
        let classes = strings(&["a", "b"]);
        let golds = strings(&["a", "b", "a"]);
        let out = class_f1(&golds, &golds, &classes).unwrap();
        assert_eq!(out.f1, vec![1.0, 1.0]);
    }

    #[test]
    fn f1_all_one_class_on_balanced_data() {
        let classes = strings(&["A", "B"]);
        let golds: Vec<String> =
            (0..10).map(|i| if i < 5 { "A" } else { "B" }.to_string()).collect();
        let preds = vec!["A".to_string(); 10];
        let out = class_f1(&preds, &golds, &classes).unwrap();
        assert!((out.f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(out.f1[1], 0.0);
    }

    #[test]
    fn f1_unseen_class_flagged() {
        let classes = strings(&["a", "b", "ghost"]);
        let golds = strings(&["a", "b"]);
        let preds = strings(&["a", "b"]);
        let out = class_f1(&preds, &golds, &classes).unwrap();
        assert_eq!(out.f1[2], 0.0);
        assert_eq!(out.degenerate, vec![false, false, true]);
    }

    /// Two Gaussian blobs per class, split into train/test.
    fn gaussian_problem(
        centers: &[(f64, f64)],
        sigma: f64,
        per_class: usize,
        seed: u64,
    ) -> (Matrix, Vec<String>, Vec<Split>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        let classes: Vec<String> = (0..centers.len()).map(|i| format!("c{i}")).collect();
        for (k, &(cx, cy)) in centers.iter().enumerate() {
            for i in 0..per_class {
                rows.push(vec![cx + normal.sample(&mut rng), cy + normal.sample(&mut rng)]);
                labels.push(classes[k].clone());
                splits.push(if i < per_class * 2 / 3 { Split::Train } else { Split::Test });
            }
        }
        (Matrix::from_rows(&rows), labels, splits, classes)
    }

    #[test]
    fn separable_classes_reach_high_f1() {
        let (x, labels, splits, classes) =
            gaussian_problem(&[(-5.0, 0.0), (5.0, 0.0)], 0.5, 200, 7);
        let model =
            train_reference(&x, &labels, &splits, &classes, &ReferenceHyper::default(), 1)
                .unwrap();
        assert!(model.f1.iter().all(|&f| f >= 0.99), "f1 = {:?}", model.f1);
    }

    #[test]
    fn permuted_labels_sit_at_chance() {
        use rand::seq::SliceRandom;
        let (x, mut labels, splits, classes) =
            gaussian_problem(&[(-5.0, 0.0), (5.0, 0.0)], 0.5, 200, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        labels.shuffle(&mut rng);
        // shuffling can empty a (class, split) cell only with vanishing
        // probability at this size
        let model =
            train_reference(&x, &labels, &splits, &classes, &ReferenceHyper::default(), 1)
                .unwrap();
        let macro_f1 = model.f1.iter().sum::<f64>() / 2.0;
        assert!((0.35..=0.65).contains(&macro_f1), "macro f1 = {macro_f1}");
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (x, labels, splits, classes) =
            gaussian_problem(&[(-2.0, 0.0), (2.0, 0.0)], 1.0, 60, 3);
        let h = ReferenceHyper { epochs: 50, ..Default::default() };
        let a = train_reference(&x, &labels, &splits, &classes, &h, 5).unwrap();
        let b = train_reference(&x, &labels, &splits, &classes, &h, 5).unwrap();
        assert_eq!(a.weights.as_slice(), b.weights.as_slice());
        assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn missing_class_in_split_is_rejected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let labels = strings(&["a", "b", "a"]);
        let splits = vec![Split::Train, Split::Train, Split::Test];
        let classes = strings(&["a", "b"]);
        assert!(matches!(
            train_reference(&x, &labels, &splits, &classes, &ReferenceHyper::default(), 0),
            Err(AnalysisError::ClassAbsentFromSplit { class, split: Split::Test }) if class == "b"
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 12;
        let d = 4; // 3 features + bias
        let k = 3;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r: Vec<f64> =
                    (0..d - 1).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                r.push(1.0);
                r
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let l2 = 0.01;
        let eps = 1e-6;
        for _ in 0..50 {
            let mut w = Matrix::zeros(k, d);
            for c in 0..k {
                for j in 0..d {
                    w.set(c, j, rng.random::<f64>() * 2.0 - 1.0);
                }
            }
            let (_, grad) = softmax_loss_and_gradient(&w, &x, &y, l2);
            // probe a random coordinate with central differences
            let (c, j) = (rng.random_range(0..k), rng.random_range(0..d));
            let mut wp = w.clone();
            wp.set(c, j, w.get(c, j) + eps);
            let mut wm = w.clone();
            wm.set(c, j, w.get(c, j) - eps);
            let (lp, _) = softmax_loss_and_gradient(&wp, &x, &y, l2);
            let (lm, _) = softmax_loss_and_gradient(&wm, &x, &y, l2);
            let fd = (lp - lm) / (2.0 * eps);
            let an = grad.get(c, j);
            let rel = (an - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-5, "rel err {rel} at ({c},{j}): analytic {an}, fd {fd}");
        }
    }
}
