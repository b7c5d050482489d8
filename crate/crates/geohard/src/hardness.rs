//! Class-wise hardness metrics.
//!
//! The headline metric scores a class by geometry alone: the *intra* term is
//! the L2 norm of the element-wise variance of the class's vectors (how
//! spread out the class is), the *inter* term is the negated mean L1
//! distance from the class centroid to every other centroid (how centrally
//! it sits). Their sum is the class hardness score; higher means harder.
//!
//! Baseline aggregates ride along: Spread (mean cosine similarity of a test
//! instance to its nearest training instances; higher = easier), Thrust
//! (norm of a centroid-weighted inverse-square attraction vector; higher =
//! easier) and class-averaged ingested sensitivity scores (higher = harder).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, TaskKind};
use crate::kmeans::{self, DEFAULT_SEEDS};
use crate::matrix::{Matrix, cosine_similarity, l1_distance, l2_norm};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("labels length {labels} does not match row count {rows}")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("label `{0}` is not in the class list")]
    UnknownClassLabel(String),
    #[error("class `{0}` has no rows")]
    EmptyClass(String),
    #[error("class `{class}` has {count} rows; at least {needed} required")]
    ClassTooSmall { class: String, count: usize, needed: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("k_shot {k_shot} exceeds candidate pool size {pool}")]
    KShotTooLarge { k_shot: usize, pool: usize },
    #[error("row {row} of the {side} matrix has zero norm")]
    ZeroNormVector { side: &'static str, row: usize },
    #[error("epsilon must be positive")]
    BadEpsilon,
    #[error("aggregation quantile must lie in (0, 1], got {0}")]
    BadQuantile(f64),
    #[error("seed list must be non-empty")]
    NoSeeds,
    #[error("scored id `{0}` does not exist in the dataset")]
    UnknownId(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {source}")]
    MalformedJson { line: usize, source: serde_json::Error },
    #[error("kmeans failed: {0}")]
    KMeans(#[from] kmeans::KMeansError),
    #[error("hardness reports disagree on classes and cannot be averaged")]
    MismatchedReports,
}

/// Per-class first and second moments in one representation space.
#[derive(Debug, Clone, Serialize)]
pub struct ClassStats {
    /// Classes in reporting order.
    pub classes: Vec<String>,
    pub counts: Vec<usize>,
    /// K x E element-wise means.
    pub centroids: Matrix,
    /// K x E element-wise population variances (divide by n).
    pub variances: Matrix,
    /// Which representation produced these stats (e.g. "raw", "umap-2d").
    pub space_tag: String,
}

impl ClassStats {
    pub fn k(&self) -> usize {
        self.classes.len()
    }
}

/// Per-class hardness values in class order; `geohard[i]` is exactly
/// `intra[i] + inter[i]`. Higher means harder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardnessReport {
    pub classes: Vec<String>,
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    pub geohard: Vec<f64>,
    pub space_tag: String,
    /// Conjunction used to join pairs, for pair tasks measured per
    /// conjunction; `None` for single-text tasks and averaged reports.
    pub conjunction: Option<String>,
}

impl HardnessReport {
    /// Index of the hardest class (largest score).
    pub fn hardest(&self) -> usize {
        self.geohard
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .expect("non-empty report")
    }
}

/// Element-wise mean of several reports over the same classes (used to pool
/// the per-conjunction reports of a pair task).
pub fn average_reports(reports: &[HardnessReport]) -> Result<HardnessReport, MetricError> {
    let first = reports.first().ok_or(MetricError::MismatchedReports)?;
    if reports.iter().any(|r| r.classes != first.classes) {
        return Err(MetricError::MismatchedReports);
    }
    let k = first.classes.len();
    let n = reports.len() as f64;
    let mean = |get: fn(&HardnessReport) -> &Vec<f64>| -> Vec<f64> {
        (0..k).map(|i| reports.iter().map(|r| get(r)[i]).sum::<f64>() / n).collect()
    };
    let intra = mean(|r| &r.intra);
    let inter = mean(|r| &r.inter);
    let geohard = intra.iter().zip(&inter).map(|(a, b)| a + b).collect();
    Ok(HardnessReport {
        classes: first.classes.clone(),
        intra,
        inter,
        geohard,
        space_tag: first.space_tag.clone(),
        conjunction: None,
    })
}

fn class_indices(
    labels: &[String],
    classes: &[String],
    rows: usize,
) -> Result<Vec<Vec<usize>>, MetricError> {
    if labels.len() != rows {
        return Err(MetricError::LengthMismatch { rows, labels: labels.len() });
    }
    let index: BTreeMap<&str, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut per_class = vec![Vec::new(); classes.len()];
    for (i, l) in labels.iter().enumerate() {
        let &k = index.get(l.as_str()).ok_or_else(|| MetricError::UnknownClassLabel(l.clone()))?;
        per_class[k].push(i);
    }
    Ok(per_class)
}

/// Element-wise mean and population variance per class.
pub fn class_stats(
    coords: &Matrix,
    labels: &[String],
    classes: &[String],
    space_tag: impl Into<String>,
) -> Result<ClassStats, MetricError> {
    let per_class = class_indices(labels, classes, coords.rows())?;
    let e = coords.cols();
    let mut centroids = Matrix::zeros(classes.len(), e);
    let mut variances = Matrix::zeros(classes.len(), e);
    let mut counts = vec![0usize; classes.len()];
    for (k, members) in per_class.iter().enumerate() {
        if members.is_empty() {
            return Err(MetricError::EmptyClass(classes[k].clone()));
        }
        counts[k] = members.len();
        let n = members.len() as f64;
        for &i in members {
            for (j, v) in coords.row(i).iter().enumerate() {
                *centroids.row_mut(k).get_mut(j).unwrap() += v;
            }
        }
        for j in 0..e {
            centroids.set(k, j, centroids.get(k, j) / n);
        }
        for &i in members {
            for j in 0..e {
                let d = coords.get(i, j) - centroids.get(k, j);
                variances.set(k, j, variances.get(k, j) + d * d);
            }
        }
        for j in 0..e {
            variances.set(k, j, variances.get(k, j) / n);
        }
    }
    Ok(ClassStats {
        classes: classes.to_vec(),
        counts,
        centroids,
        variances,
        space_tag: space_tag.into(),
    })
}

/// Intra-class hardness: L2 norm of the per-class element-wise variance
/// vector. Always >= 0; zero iff every vector in the class is identical.
pub fn intra_hardness(stats: &ClassStats) -> Vec<f64> {
    (0..stats.k()).map(|k| l2_norm(stats.variances.row(k))).collect()
}

/// Inter-class hardness: negated mean L1 distance from the class centroid to
/// every other centroid. Always <= 0; a *middlemost* class scores highest.
pub fn inter_hardness(stats: &ClassStats) -> Result<Vec<f64>, MetricError> {
    let k = stats.k();
    if k < 2 {
        return Err(MetricError::TooFewClasses(k));
    }
    Ok((0..k)
        .map(|a| {
            let sum: f64 = (0..k)
                .filter(|&b| b != a)
                .map(|b| l1_distance(stats.centroids.row(a), stats.centroids.row(b)))
                .sum();
            -sum / (k - 1) as f64
        })
        .collect())
}

/// Total hardness per class: intra + inter. Requires every class to have at
/// least 2 members so the variance term is meaningful.
pub fn geohard_total(stats: &ClassStats) -> Result<HardnessReport, MetricError> {
    for (k, &c) in stats.counts.iter().enumerate() {
        if c < 2 {
            return Err(MetricError::ClassTooSmall {
                class: stats.classes[k].clone(),
                count: c,
                needed: 2,
            });
        }
    }
    let intra = intra_hardness(stats);
    let inter = inter_hardness(stats)?;
    let geohard = intra.iter().zip(&inter).map(|(a, b)| a + b).collect();
    Ok(HardnessReport {
        classes: stats.classes.clone(),
        intra,
        inter,
        geohard,
        space_tag: stats.space_tag.clone(),
        conjunction: None,
    })
}

/// Which representation a baseline runs in; recorded for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpace {
    #[default]
    Raw,
    Reduced,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpreadConfig {
    /// Number of most-similar training instances averaged per test instance.
    pub k_shot: usize,
    /// Restrict the candidate pool to training rows of the test instance's
    /// own class.
    pub restrict_same_class: bool,
    pub space: MetricSpace,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        Self { k_shot: 8, restrict_same_class: false, space: MetricSpace::Raw }
    }
}

/// Per-instance and per-class scores of an instance-level baseline.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineScores {
    pub classes: Vec<String>,
    pub per_class: Vec<f64>,
    pub per_instance: Vec<f64>,
}

/// Spread: per test instance, the mean cosine similarity to its `k_shot`
/// most similar training instances; per class, the mean over that class's
/// test instances. Higher means easier.
pub fn spread_class_scores(
    train: (&Matrix, &[String]),
    test: (&Matrix, &[String]),
    classes: &[String],
    cfg: &SpreadConfig,
) -> Result<BaselineScores, MetricError> {
    let (train_x, train_labels) = train;
    let (test_x, test_labels) = test;
    let train_per_class = class_indices(train_labels, classes, train_x.rows())?;
    let test_per_class = class_indices(test_labels, classes, test_x.rows())?;

    let mut per_instance = vec![0.0f64; test_x.rows()];
    for (k, members) in test_per_class.iter().enumerate() {
        let pool: Vec<usize> = if cfg.restrict_same_class {
            train_per_class[k].clone()
        } else {
            (0..train_x.rows()).collect()
        };
        if cfg.k_shot > pool.len() {
            return Err(MetricError::KShotTooLarge { k_shot: cfg.k_shot, pool: pool.len() });
        }
        for &i in members {
            let q = test_x.row(i);
            let mut sims = Vec::with_capacity(pool.len());
            for &t in &pool {
                let sim = cosine_similarity(q, train_x.row(t)).ok_or_else(|| {
                    if l2_norm(q) == 0.0 {
                        MetricError::ZeroNormVector { side: "test", row: i }
                    } else {
                        MetricError::ZeroNormVector { side: "train", row: t }
                    }
                })?;
                sims.push(sim);
            }
            sims.sort_by(|a, b| b.partial_cmp(a).unwrap());
            per_instance[i] = sims[..cfg.k_shot].iter().sum::<f64>() / cfg.k_shot as f64;
        }
    }

    let per_class = test_per_class
        .iter()
        .map(|members| {
            members.iter().map(|&i| per_instance[i]).sum::<f64>() / members.len().max(1) as f64
        })
        .collect();
    Ok(BaselineScores { classes: classes.to_vec(), per_class, per_instance })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThrustConfig {
    /// Training rows sampled per class before clustering.
    pub sample_size: usize,
    /// Fixed cluster count instead of the `max(ceil(sample^1/4), 3)` rule.
    pub cluster_count_override: Option<usize>,
    pub seeds: Vec<u64>,
    /// Clamp for the inverse-square denominator; the score would otherwise
    /// blow up for queries sitting on a centroid.
    pub epsilon: f64,
    /// Per-class aggregate = mean of the lowest `ceil(q * n)` scores.
    pub aggregation_quantile: f64,
}

impl ThrustConfig {
    /// 200 for single-text tasks, 600 for pair tasks.
    pub fn default_sample_size(kind: TaskKind) -> usize {
        match kind {
            TaskKind::SingleText => 200,
            TaskKind::Pair => 600,
        }
    }

    /// Cluster count rule applied to the configured sample size.
    pub fn cluster_count(&self) -> usize {
        self.cluster_count_override
            .unwrap_or_else(|| ((self.sample_size as f64).powf(0.25).ceil() as usize).max(3))
    }
}

impl Default for ThrustConfig {
    fn default() -> Self {
        Self {
            sample_size: 200,
            cluster_count_override: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            epsilon: 1e-8,
            aggregation_quantile: 0.25,
        }
    }
}

/// Thrust: the norm of a centroid-weighted inverse-square attraction vector
/// pulling the query toward clustered per-class training pools, averaged
/// over seeds; the class aggregate is the mean of the bottom quantile.
/// Higher means easier.
pub fn thrust_class_scores(
    train: (&Matrix, &[String]),
    queries: (&Matrix, &[String]),
    classes: &[String],
    cfg: &ThrustConfig,
) -> Result<BaselineScores, MetricError> {
    if cfg.epsilon <= 0.0 {
        return Err(MetricError::BadEpsilon);
    }
    if cfg.seeds.is_empty() {
        return Err(MetricError::NoSeeds);
    }
    if !(cfg.aggregation_quantile > 0.0 && cfg.aggregation_quantile <= 1.0) {
        return Err(MetricError::BadQuantile(cfg.aggregation_quantile));
    }
    let (train_x, train_labels) = train;
    let (query_x, query_labels) = queries;
    let train_per_class = class_indices(train_labels, classes, train_x.rows())?;
    let query_per_class = class_indices(query_labels, classes, query_x.rows())?;
    for (k, members) in train_per_class.iter().enumerate() {
        if members.is_empty() {
            return Err(MetricError::EmptyClass(classes[k].clone()));
        }
    }

    let n_classes = classes.len() as f64;
    let k_nominal = cfg.cluster_count();
    let mut per_instance = vec![0.0f64; query_x.rows()];

    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // clusters from every class's sampled pool: (size, centroid row)
        let mut clusters: Vec<(f64, Vec<f64>)> = Vec::new();
        for members in &train_per_class {
            let mut pool = members.clone();
            pool.shuffle(&mut rng);
            pool.truncate(cfg.sample_size.min(pool.len()));
            let sampled = train_x.select_rows(&pool);
            let k = k_nominal.min(sampled.rows());
            let model = kmeans::kmeans_fit(&sampled, k, seed)?;
            let mut sizes = vec![0usize; model.k()];
            for &a in &model.assignments {
                sizes[a] += 1;
            }
            for (c, &size) in sizes.iter().enumerate() {
                clusters.push((size as f64, model.centroids.row(c).to_vec()));
            }
        }
        let norm = 1.0 / (n_classes * k_nominal as f64);
        for qi in 0..query_x.rows() {
            let q = query_x.row(qi);
            let mut acc = vec![0.0f64; query_x.cols()];
            for (size, centroid) in &clusters {
                let d: Vec<f64> = centroid.iter().zip(q).map(|(m, x)| m - x).collect();
                let len = l2_norm(&d).max(cfg.epsilon);
                let w = size / (len * len);
                for (a, dv) in acc.iter_mut().zip(&d) {
                    *a += w * dv / len;
                }
            }
            per_instance[qi] += l2_norm(&acc) * norm;
        }
    }
    let n_seeds = cfg.seeds.len() as f64;
    for v in &mut per_instance {
        *v /= n_seeds;
    }

    let mut per_class = Vec::with_capacity(classes.len());
    for members in &query_per_class {
        let mut scores: Vec<f64> = members.iter().map(|&i| per_instance[i]).collect();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let take = ((cfg.aggregation_quantile * scores.len() as f64).ceil() as usize)
            .clamp(1, scores.len().max(1));
        if scores.is_empty() {
            per_class.push(f64::NAN);
        } else {
            per_class.push(scores[..take].iter().sum::<f64>() / take as f64);
        }
    }
    Ok(BaselineScores { classes: classes.to_vec(), per_class, per_instance })
}

/// Class-wise aggregate of ingested per-instance sensitivity scores.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityAggregate {
    pub classes: Vec<String>,
    /// Mean sensitivity per class; higher means harder.
    pub per_class: Vec<f64>,
    /// Fraction of dataset instances that carried a score.
    pub coverage: f64,
}

/// Averages per-instance sensitivity scores within each class. Every scored
/// id must exist in the dataset and every class needs at least one scored
/// instance.
pub fn aggregate_sensitivity(
    scores: &BTreeMap<String, f64>,
    dataset: &Dataset,
) -> Result<SensitivityAggregate, MetricError> {
    let classes = dataset.schema().classes();
    let mut sums = vec![0.0f64; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    let mut matched = 0usize;
    let by_id: BTreeMap<&str, usize> = dataset
        .instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| (inst.id.as_str(), i))
        .collect();
    for (id, &score) in scores {
        let &i = by_id.get(id.as_str()).ok_or_else(|| MetricError::UnknownId(id.clone()))?;
        let k = dataset
            .schema()
            .index_of(&dataset.instances()[i].label)
            .expect("validated label");
        sums[k] += score;
        counts[k] += 1;
        matched += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(MetricError::EmptyClass(classes[k].clone()));
        }
    }
    let per_class = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    Ok(SensitivityAggregate {
        classes: classes.to_vec(),
        per_class,
        coverage: matched as f64 / dataset.len().max(1) as f64,
    })
}

#[derive(Debug, Deserialize)]
struct ScoreRecord {
    id: String,
    score: f64,
}

/// Loads a sensitivity score file: JSONL `{"id": ..., "score": ...}`.
pub fn load_sensitivity_scores(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>, MetricError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line)
            .map_err(|source| MetricError::MalformedJson { line: i + 1, source })?;
        out.insert(rec.id, rec.score);
    }
    Ok(out)
}
