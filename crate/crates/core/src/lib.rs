//! Layer-wise interpretability toolkit for probing where medical knowledge
//! lives inside a language model.
//!
//! The crate covers everything downstream of the model itself:
//!
//! - [`prompt`]: prompt corpora expanded from templates and substitution lists.
//! - [`trace`]: the on-disk trace bundle format written by the extraction harness.
//! - [`manifold`]: exact k-NN graphs and a deterministic UMAP embedding.
//! - [`geometry`]: silhouette, bootstrap intervals, local anisotropy, age
//!   linearity and disease-progression circularity.
//! - [`causal`]: saliency, lesioning and activation-patching profiles.
//! - [`carto`]: interval selection and LLM map assembly/rendering.

pub mod carto;
pub mod causal;
pub mod concept;
pub mod geometry;
pub mod manifold;
pub mod metric;
pub mod prompt;
pub mod seed;
pub mod stats;
pub mod trace;

pub use concept::{Analysis, Concept};
pub use metric::{LayerStat, MetricKind, MetricSeries};
