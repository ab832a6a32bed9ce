//! Dimensionality reduction of activation matrices.

mod knn;
mod spectral;
mod umap;

use thiserror::Error;

pub use knn::{knn_graph, NeighborGraph};
pub use umap::{fit_curve_params, initialize, umap_embed, Embedding, UmapParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("k = {k} needs 1 <= k < n (n = {n})")]
    BadNeighborCount { k: usize, n: usize },
    #[error("input contains a non-finite value at row {row}")]
    NonFiniteInput { row: usize },
    #[error("UMAP needs at least {needed} points, got {n}")]
    TooFewPoints { n: usize, needed: usize },
    #[error("output dimension must be at least 1")]
    ZeroDimension,
    #[error("non-finite value produced during {stage}")]
    NonFinite { stage: &'static str },
}
