//! Dimensionality reduction: deterministic PCA and a UMAP-style nonlinear
//! neighbor embedding, plus a neighborhood-preservation diagnostic for
//! judging reduction quality.

mod knn;
mod pca;
mod umap;

pub use knn::{FuzzyEdge, NeighborGraph, knn_graph};
pub use pca::{PcaOutput, pca_fit_transform};
pub use umap::{UmapConfig, attraction_energy, attraction_grad_coeff, fit_ab, umap_fit_transform};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingFormat, EmbeddingMatrix, store_embeddings};
use crate::matrix::{Matrix, euclidean_sq, l2_norm};

#[derive(Debug, Error)]
pub enum DimRedError {
    #[error("target dimension {e} out of range (max {max})")]
    RangeE { e: usize, max: usize },
    #[error("need at least {needed} points, got {n}")]
    TooFewPoints { n: usize, needed: usize },
    #[error("k = {k} must be smaller than the number of points ({n})")]
    KTooLarge { k: usize, n: usize },
    #[error("matrices disagree on row count ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("ids length {ids} does not match row count {rows}")]
    IdsMismatch { ids: usize, rows: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite layout gradient at epoch {epoch}")]
    NonFiniteLayout { epoch: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    #[default]
    Cosine,
}

impl std::str::FromStr for DistanceMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMethod {
    Pca,
    Umap,
}

/// Low-dimensional coordinates with full provenance: the method, the seed,
/// and every parameter that went into the fit.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedMatrix {
    pub ids: Vec<String>,
    pub coords: Matrix,
    pub method: ReduceMethod,
    pub seed: u64,
    pub params: serde_json::Value,
}

impl ReducedMatrix {
    pub fn e(&self) -> usize {
        self.coords.cols()
    }

    /// Narrowed view for persistence through the embedding file formats.
    pub fn to_embedding_matrix(&self) -> Result<EmbeddingMatrix, EmbeddingError> {
        let data: Vec<f32> = self.coords.as_slice().iter().map(|&v| v as f32).collect();
        EmbeddingMatrix::new(
            self.ids.clone(),
            data,
            self.coords.cols(),
            format!("reduced:{:?}", self.method),
        )
    }
}

/// Persists coordinates through the embedding formats plus a
/// `<path>.meta.json` sidecar recording `{method, seed, params}`.
pub fn save_reduced(
    rm: &ReducedMatrix,
    path: impl AsRef<std::path::Path>,
    format: EmbeddingFormat,
) -> Result<(), DimRedError> {
    let path = path.as_ref();
    store_embeddings(&rm.to_embedding_matrix()?, path, format)?;
    let sidecar = serde_json::json!({
        "method": rm.method,
        "seed": rm.seed,
        "params": rm.params,
    });
    let bytes = serde_json::to_vec_pretty(&sidecar).expect("sidecar serialization");
    let meta_path = path.with_file_name(format!(
        "{}.meta.json",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    crate::fsutil::write_atomic(&meta_path, &bytes).map_err(EmbeddingError::Io)?;
    Ok(())
}

/// Scales every row to unit L2 norm; zero rows stay zero. Optional
/// pre-reduction step, off by default.
pub fn l2_normalize_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let norm = l2_norm(out.row(i));
        if norm > 0.0 {
            for v in out.row_mut(i) {
                *v /= norm;
            }
        }
    }
    out
}

/// Exact k nearest neighbors by brute force (Euclidean), ties broken by
/// index order; used by the preservation diagnostic.
fn exact_knn_indices(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = x.rows();
    (0..n)
        .map(|i| {
            let mut dists: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean_sq(x.row(i), x.row(j)), j))
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            dists.truncate(k);
            dists.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Mean fraction of k nearest neighbors shared between the original and the
/// reduced representation; 1.0 means the reduction kept every neighborhood.
pub fn knn_preservation(x: &Matrix, y: &Matrix, k: usize) -> Result<f64, DimRedError> {
    if x.rows() != y.rows() {
        return Err(DimRedError::SizeMismatch(x.rows(), y.rows()));
    }
    let n = x.rows();
    if k >= n {
        return Err(DimRedError::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(DimRedError::BadParam("k must be at least 1".into()));
    }
    let nx = exact_knn_indices(x, k);
    let ny = exact_knn_indices(y, k);
    let mut total = 0.0;
    for i in 0..n {
        let set: std::collections::HashSet<usize> = nx[i].iter().copied().collect();
        let shared = ny[i].iter().filter(|j| set.contains(j)).count();
        total += shared as f64 / k as f64;
    }
    Ok(total / n as f64)
}
