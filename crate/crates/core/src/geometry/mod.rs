//! Structure metrics over embeddings.

mod anisotropy;
mod bootstrap;
mod circularity;
mod linear;
mod silhouette;

use thiserror::Error;

pub use anisotropy::{local_anisotropy, local_anisotropy_per_point, DEFAULT_ANISOTROPY_K};
pub use bootstrap::{bootstrap_ci, mean_ci, Estimate, DEFAULT_RESAMPLES, MIN_RESAMPLES};
pub use circularity::{
    aggregate_circularity, circularity_stats, stage_circularity, Circularity, CircularityStats, CircularitySummary,
    N_STAGES,
};
pub use linear::{age_linear_fit, LinearFit};
pub use silhouette::{
    encode_labels, label_contrast, pairwise_distances, silhouette, silhouette_indexed, LabelContrast,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("need at least {needed} points, got {n}")]
    TooFewPoints { n: usize, needed: usize },
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("silhouette needs at least two distinct labels")]
    SingleLabel,
    #[error("input contains a non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("expected {expected} columns, got {actual}")]
    Columns { expected: usize, actual: usize },
    #[error("k = {k} needs k < n (n = {n})")]
    BadK { k: usize, n: usize },
    #[error("design matrix is rank-deficient")]
    RankDeficient,
    #[error("target values are all equal")]
    ConstantTarget,
    #[error("stage {0} is missing")]
    MissingStage(u8),
    #[error("stage {0} appears more than once")]
    DuplicateStage(u8),
    #[error("stage {0} is outside 1..=9")]
    StageOutOfRange(u8),
    #[error("bootstrap needs at least {min} resamples, got {got}")]
    TooFewResamples { got: usize, min: usize },
    #[error("bootstrap needs non-empty data")]
    EmptyData,
    #[error("metric failed on a resample after {attempts} attempts: {last}")]
    ResampleFailed { attempts: usize, last: Box<GeometryError> },
    #[error("nothing to aggregate")]
    NothingToAggregate,
}

pub(crate) fn check_rows(points: ndarray::ArrayView2<f64>) -> Result<(), GeometryError> {
    match points.outer_iter().position(|r| r.iter().any(|x| !x.is_finite())) {
        Some(row) => Err(GeometryError::NonFinite { row }),
        None => Ok(()),
    }
}
