//! Pearson validation of class-wise metrics against reference class F1.
//!
//! Every metric declares an orientation. Hardness-oriented metrics (higher =
//! harder) should anti-correlate with F1, so their coefficient is negated
//! before reporting; after adjustment, higher is better for every metric and
//! a negative adjusted value flags a metric running against its own design.

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 {
        return Err(AnalysisError::ZeroVariance("first"));
    }
    if vy == 0.0 {
        return Err(AnalysisError::ZeroVariance("second"));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricOrientation {
    /// Higher metric value means a harder class (anti-correlates with F1).
    Hardness,
    /// Higher metric value means an easier class (correlates with F1).
    Easiness,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricVector {
    pub metric: String,
    pub orientation: MetricOrientation,
    /// One value per class, in the dataset's class order.
    pub values: Vec<f64>,
}

/// Everything known about one dataset going into the correlation protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    pub classes: Vec<String>,
    pub metrics: Vec<MetricVector>,
    /// One or more reference class-F1 vectors; they are averaged
    /// element-wise into the single reference the metrics are scored
    /// against.
    pub references: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub dataset: String,
    pub metric: String,
    pub orientation: MetricOrientation,
    /// Raw coefficient against the averaged reference; `None` when either
    /// vector was constant.
    pub r_raw: Option<f64>,
    /// Sign-adjusted so higher is better regardless of orientation.
    pub r_adjusted: Option<f64>,
    /// Adjusted coefficient came out negative: the metric points the wrong
    /// way on this dataset.
    pub violation: bool,
    /// Zero-variance input made the coefficient undefined; excluded from
    /// macro averages.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    /// Mean adjusted coefficient over datasets with a defined value.
    pub macro_avg: f64,
    /// Absolute value of the macro average.
    pub macro_abs: f64,
    pub datasets_counted: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
    pub summaries: Vec<MetricSummary>,
    /// Averaged reference per dataset, echoed for provenance.
    pub references: Vec<(String, Vec<f64>)>,
    /// The full input tables, echoed for provenance.
    pub inputs: Vec<DatasetMetrics>,
}

/// Runs the correlation protocol over per-dataset metric tables.
pub fn correlate_report(inputs: &[DatasetMetrics]) -> Result<CorrelationReport, AnalysisError> {
    let mut entries = Vec::new();
    let mut references = Vec::new();
    for dm in inputs {
        let k = dm.classes.len();
        if k < 2 {
            return Err(AnalysisError::TooFewClasses { dataset: dm.dataset.clone() });
        }
        if dm.references.is_empty() {
            return Err(AnalysisError::NoReferences { dataset: dm.dataset.clone() });
        }
        if dm.references.iter().any(|r| r.len() != k)
            || dm.metrics.iter().any(|m| m.values.len() != k)
        {
            return Err(AnalysisError::MisalignedClasses { dataset: dm.dataset.clone() });
        }
        // element-wise mean of the supplied reference vectors
        let reference: Vec<f64> = (0..k)
            .map(|i| dm.references.iter().map(|r| r[i]).sum::<f64>() / dm.references.len() as f64)
            .collect();
        for m in &dm.metrics {
            let entry = match pearson(&m.values, &reference) {
                Ok(r_raw) => {
                    let r_adjusted = match m.orientation {
                        MetricOrientation::Hardness => -r_raw,
                        MetricOrientation::Easiness => r_raw,
                    };
                    CorrelationEntry {
                        dataset: dm.dataset.clone(),
                        metric: m.metric.clone(),
                        orientation: m.orientation,
                        r_raw: Some(r_raw),
                        r_adjusted: Some(r_adjusted),
                        violation: r_adjusted < 0.0,
                        degenerate: false,
                    }
                }
                Err(AnalysisError::ZeroVariance(_)) => CorrelationEntry {
                    dataset: dm.dataset.clone(),
                    metric: m.metric.clone(),
                    orientation: m.orientation,
                    r_raw: None,
                    r_adjusted: None,
                    violation: false,
                    degenerate: true,
                },
                Err(e) => return Err(e),
            };
            entries.push(entry);
        }
        references.push((dm.dataset.clone(), reference));
    }

    // macro averages per metric, in first-appearance order
    let mut metric_names: Vec<String> = Vec::new();
    for e in &entries {
        if !metric_names.contains(&e.metric) {
            metric_names.push(e.metric.clone());
        }
    }
    let summaries = metric_names
        .into_iter()
        .map(|name| {
            let vals: Vec<f64> = entries
                .iter()
                .filter(|e| e.metric == name)
                .filter_map(|e| e.r_adjusted)
                .collect();
            let macro_avg =
                if vals.is_empty() { 0.0 } else { vals.iter().sum::<f64>() / vals.len() as f64 };
            MetricSummary {
                metric: name,
                macro_avg,
                macro_abs: macro_avg.abs(),
                datasets_counted: vals.len(),
            }
        })
        .collect();

    Ok(CorrelationReport { entries, summaries, references, inputs: inputs.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_exact_lines() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = [0.4, -1.2, 5.0, 2.2, 0.0];
        let up: Vec<f64> = x.iter().map(|v| 3.5 * v + 2.0).collect();
        let down: Vec<f64> = x.iter().map(|v| -0.7 * v + 1.0).collect();
        assert!((pearson(&x, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &down).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_reference_class_values() {
        // published class F1 vs hardness scores for one sentiment dataset
        let f1 = [87.6, 71.0, 80.5];
        let gh = [-8.316, -3.818, -6.493];
        let r = pearson(&f1, &gh).unwrap();
        assert!((r - (-0.999)).abs() <= 2e-3, "r = {r}");
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(AnalysisError::LengthMismatch(2, 1))
        ));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(AnalysisError::TooShort(1))));
        assert!(matches!(
            pearson(&[1.0, 1.0], &[0.0, 2.0]),
            Err(AnalysisError::ZeroVariance("first"))
        ));
    }

    fn table(metrics: Vec<MetricVector>, references: Vec<Vec<f64>>) -> DatasetMetrics {
        DatasetMetrics {
            dataset: "toy".into(),
            classes: vec!["a".into(), "b".into(), "c".into()],
            metrics,
            references,
        }
    }

    #[test]
    fn adjusted_signs_follow_orientation() {
        let f1 = vec![90.0, 70.0, 80.0];
        let hardness = MetricVector {
            metric: "h".into(),
            orientation: MetricOrientation::Hardness,
            values: vec![-90.0, -70.0, -80.0], // anti-linear in f1
        };
        let easiness = MetricVector {
            metric: "e".into(),
            orientation: MetricOrientation::Easiness,
            values: f1.clone(),
        };
        let rep = correlate_report(&[table(vec![hardness, easiness], vec![f1])]).unwrap();
        let h = &rep.entries[0];
        assert!((h.r_raw.unwrap() + 1.0).abs() < 1e-12);
        assert!((h.r_adjusted.unwrap() - 1.0).abs() < 1e-12);
        assert!(!h.violation);
        let e = &rep.entries[1];
        assert!((e.r_adjusted.unwrap() - 1.0).abs() < 1e-12);
        // flipping the declared orientation exactly negates the adjustment
        let flipped = MetricVector {
            metric: "e".into(),
            orientation: MetricOrientation::Hardness,
            values: e.r_raw.map(|_| vec![90.0, 70.0, 80.0]).unwrap(),
        };
        let rep2 =
            correlate_report(&[table(vec![flipped], vec![vec![90.0, 70.0, 80.0]])]).unwrap();
        assert!(
            (rep2.entries[0].r_adjusted.unwrap() + e.r_adjusted.unwrap()).abs() < 1e-12
        );
        assert!(rep2.entries[0].violation);
    }

    #[test]
    fn multiple_references_average_elementwise() {
        let m = MetricVector {
            metric: "m".into(),
            orientation: MetricOrientation::Easiness,
            values: vec![1.0, 2.0, 3.0],
        };
        let rep = correlate_report(&[table(
            vec![m],
            vec![vec![90.0, 70.0, 80.0], vec![92.0, 72.0, 82.0]],
        )])
        .unwrap();
        assert_eq!(rep.references[0].1, vec![91.0, 71.0, 81.0]);
    }

    #[test]
    fn zero_variance_metric_is_flagged_and_excluded() {
        let constant = MetricVector {
            metric: "const".into(),
            orientation: MetricOrientation::Easiness,
            values: vec![5.0, 5.0, 5.0],
        };
        let fine = MetricVector {
            metric: "fine".into(),
            orientation: MetricOrientation::Easiness,
            values: vec![1.0, 2.0, 3.0],
        };
        let rep = correlate_report(&[table(vec![constant, fine], vec![vec![
            90.0, 70.0, 80.0,
        ]])])
        .unwrap();
        assert!(rep.entries[0].degenerate);
        assert_eq!(rep.entries[0].r_raw, None);
        let s = rep.summaries.iter().find(|s| s.metric == "const").unwrap();
        assert_eq!(s.datasets_counted, 0);
        let s = rep.summaries.iter().find(|s| s.metric == "fine").unwrap();
        assert_eq!(s.datasets_counted, 1);
        assert!((s.macro_abs - s.macro_avg.abs()).abs() < 1e-15);
    }

    #[test]
    fn misaligned_vectors_rejected() {
        let bad = MetricVector {
            metric: "m".into(),
            orientation: MetricOrientation::Easiness,
            values: vec![1.0, 2.0],
        };
        assert!(matches!(
            correlate_report(&[table(vec![bad], vec![vec![1.0, 2.0, 3.0]])]),
            Err(AnalysisError::MisalignedClasses { .. })
        ));
    }
}
