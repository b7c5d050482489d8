//! Class-wise hardness diagnostics for labeled classification datasets.
//!
//! The pipeline: ingest a JSONL dataset, attach sentence embeddings (from
//! files or an OpenAI-compatible HTTP encoder), optionally compress them with
//! PCA or a UMAP-style neighbor embedding, then score each *class* for
//! hardness from its geometry — the spread of its members plus how centrally
//! it sits among the other classes. Baseline aggregates (Spread, Thrust,
//! ingested sensitivity scores), Pearson validation against reference
//! class-wise F1, class reorganization, and cluster-medoid demonstration
//! selection build on the same primitives.
//!
//! Start from the `examples/` directory — there is one runnable example per
//! capability — or from the `geohard` binary, whose subcommands mirror the
//! library surface.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod dimred;
pub mod embedding;
pub mod hardness;
pub mod kmeans;
pub mod matrix;
pub mod plot;
pub mod provider;
pub mod report;

pub(crate) mod fsutil;

pub use matrix::Matrix;

/// Tool version echoed into every report for provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
