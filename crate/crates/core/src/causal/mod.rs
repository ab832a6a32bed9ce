//! Per-layer causal and attribution metrics over harness records.

mod patching;
mod profiles;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::trace::PatchSite;

pub use patching::{
    logit_difference, patching_effect, patching_effect_with, patching_profile, PatchingEffect, PatchingProfile,
    PATCH_EPSILON, SUCCESS_THRESHOLD,
};
pub use profiles::{lesion_profile, saliency_profile, SaliencyProfile};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("pair `{pair_id}` layer {layer} {site:?}: |LD_clean - LD_corrupt| = {denominator:e} is below {epsilon:e}")]
    Degenerate {
        pair_id: String,
        layer: usize,
        site: PatchSite,
        denominator: f64,
        epsilon: f64,
    },
    #[error("record `{id}` has a non-finite value")]
    NonFinite { id: String },
    #[error("record `{id}` has {actual} layers, expected {expected}")]
    LayerCount { id: String, expected: usize, actual: usize },
    #[error("record `{id}` layer {layer}: negative saliency {value}")]
    NegativeSaliency { id: String, layer: usize, value: f64 },
    #[error("record `{id}` layer {layer} has no judge score; run the judge first")]
    Unscored { id: String, layer: usize },
    #[error("record `{id}` layer {layer}: judge score {score} outside 1..=10")]
    ScoreOutOfRange { id: String, layer: usize, score: u8 },
    #[error("record `{id}` layer {layer} is outside 0..{n_layers}")]
    LayerOutOfRange { id: String, layer: usize, n_layers: usize },
    #[error("no records")]
    NoRecords,
    #[error(transparent)]
    Bootstrap(#[from] GeometryError),
}
