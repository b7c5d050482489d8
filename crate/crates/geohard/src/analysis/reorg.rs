//! Class reorganization: split one class into sub-classes (cluster-guided or
//! random) and quantify how the split changes the balance of class-wise
//! hardness, measured as the population std of the per-class scores.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::hardness::{class_stats, geohard_total};
use crate::kmeans;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    KMeans,
    Random,
}

impl std::str::FromStr for SplitMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kmeans" => Ok(Self::KMeans),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown split method `{other}`")),
        }
    }
}

/// Relabels members of `target_class` as `"<target>#0" ... "<target>#(n-1)"`
/// by KMeans assignment or seeded uniform random assignment; every other
/// label is untouched.
pub fn reorg_split(
    coords: &Matrix,
    labels: &[String],
    target_class: &str,
    n_subclasses: usize,
    method: SplitMethod,
    seed: u64,
) -> Result<Vec<String>, AnalysisError> {
    if labels.len() != coords.rows() {
        return Err(AnalysisError::LengthMismatch(coords.rows(), labels.len()));
    }
    if n_subclasses < 2 {
        return Err(AnalysisError::BadParam("n_subclasses must be at least 2".into()));
    }
    let members: Vec<usize> =
        (0..labels.len()).filter(|&i| labels[i] == target_class).collect();
    if members.is_empty() {
        return Err(AnalysisError::UnknownClass(target_class.to_string()));
    }
    if members.len() < n_subclasses {
        return Err(AnalysisError::TooFewMembers {
            class: target_class.to_string(),
            have: members.len(),
            need: n_subclasses,
        });
    }

    let assignment: Vec<usize> = match method {
        SplitMethod::KMeans => {
            let sub = coords.select_rows(&members);
            kmeans::kmeans_fit(&sub, n_subclasses, seed)?.assignments
        }
        SplitMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            members.iter().map(|_| rng.random_range(0..n_subclasses)).collect()
        }
    };

    let mut out = labels.to_vec();
    for (local, &row) in members.iter().enumerate() {
        out[row] = format!("{target_class}#{}", assignment[local]);
    }
    Ok(out)
}

/// Population standard deviation (denominator n).
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Distinct labels in order of first appearance.
fn classes_in_order(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ReorgReport {
    pub classes_before: Vec<String>,
    pub geohard_before: Vec<f64>,
    pub std_before: f64,
    pub classes_after: Vec<String>,
    pub geohard_after: Vec<f64>,
    pub std_after: f64,
    /// `(std_after - std_before) / std_before`; negative means the split
    /// made class hardness more uniform.
    pub relative_std_change: f64,
    /// Provenance of the split that produced `labels_after`, when known.
    pub method: Option<SplitMethod>,
    pub seed: Option<u64>,
}

/// Scores both labelings of the same coordinates and compares the spread of
/// their per-class hardness vectors.
pub fn reorg_evaluate(
    coords: &Matrix,
    labels_before: &[String],
    labels_after: &[String],
) -> Result<ReorgReport, AnalysisError> {
    let run = |labels: &[String]| -> Result<(Vec<String>, Vec<f64>), AnalysisError> {
        let classes = classes_in_order(labels);
        let stats = class_stats(coords, labels, &classes, "reorg")?;
        let report = geohard_total(&stats)?;
        Ok((classes, report.geohard))
    };
    let (classes_before, geohard_before) = run(labels_before)?;
    let (classes_after, geohard_after) = run(labels_after)?;
    let std_before = population_std(&geohard_before);
    let std_after = population_std(&geohard_after);
    Ok(ReorgReport {
        classes_before,
        geohard_before,
        std_before,
        classes_after,
        geohard_after,
        std_after,
        relative_std_change: (std_after - std_before) / std_before,
        method: None,
        seed: None,
    })
}
