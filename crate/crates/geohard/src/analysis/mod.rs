//! Validation and application layers on top of the hardness metrics:
//! Pearson correlation against reference class-wise F1, a desk-scale softmax
//! reference classifier, a concentration-bound simulation for the
//! train/test-gap estimate, class reorganization, and cluster-medoid
//! demonstration selection for in-context learning.

mod chebyshev;
mod correlate;
mod demos;
mod reference;
mod reorg;

pub use chebyshev::{ChebyshevResult, ChebyshevSimConfig, chebyshev_simulate};
pub use correlate::{
    CorrelationEntry, CorrelationReport, DatasetMetrics, MetricOrientation, MetricSummary,
    MetricVector, correlate_report, pearson,
};
pub use demos::{Demonstrations, select_demonstrations};
pub use reference::{
    ClassF1, ReferenceHyper, ReferenceModel, class_f1, softmax_loss_and_gradient, train_reference,
};
pub use reorg::{ReorgReport, SplitMethod, population_std, reorg_evaluate, reorg_split};

use thiserror::Error;

use crate::dataset::Split;
use crate::hardness::MetricError;
use crate::kmeans::KMeansError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("{0} vector has zero variance")]
    ZeroVariance(&'static str),
    #[error("dataset `{dataset}`: vector length does not match its class list")]
    MisalignedClasses { dataset: String },
    #[error("dataset `{dataset}`: no reference F1 vectors supplied")]
    NoReferences { dataset: String },
    #[error("dataset `{dataset}`: need at least 2 classes")]
    TooFewClasses { dataset: String },
    #[error("class `{class}` is absent from the {split} split")]
    ClassAbsentFromSplit { class: String, split: Split },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("n_tr ({n_tr}) must be at least n_te ({n_te})")]
    NTrLessThanNTe { n_tr: usize, n_te: usize },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has {have} members; {need} required")]
    TooFewMembers { class: String, have: usize, need: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
}
