//! Per-layer metric series shared by the geometry and causal analyses.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::concept::Concept;

/// Which statistic a [`MetricSeries`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    UmapSilhouette,
    UmapAnisotropy,
    Saliency,
    Lesioning,
    Patching,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::UmapSilhouette => "umap_silhouette",
            MetricKind::UmapAnisotropy => "umap_anisotropy",
            MetricKind::Saliency => "saliency",
            MetricKind::Lesioning => "lesioning",
            MetricKind::Patching => "patching",
        }
    }

    /// Embedding metrics are indexed by trace row (`0..=n_layers`), causal
    /// metrics by block (`0..n_layers`).
    pub fn is_embedding_metric(self) -> bool {
        matches!(self, MetricKind::UmapSilhouette | MetricKind::UmapAnisotropy)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Point estimate with a bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStat {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl LayerStat {
    pub fn exact(value: f64, n: usize) -> Self {
        LayerStat {
            mean: value,
            ci_low: value,
            ci_high: value,
            n,
        }
    }
}

/// One per-layer statistic for an (analysis, concept) pair. `None` cells are
/// layers with no usable data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub analysis: MetricKind,
    pub concept: Concept,
    /// Label used for grouping, when the metric depends on one
    /// (e.g. `specialty` vs `mechanism` for drug silhouettes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_key: Option<String>,
    pub per_layer: Vec<Option<LayerStat>>,
}

impl MetricSeries {
    pub fn new(analysis: MetricKind, concept: Concept, per_layer: Vec<Option<LayerStat>>) -> Self {
        MetricSeries {
            analysis,
            concept,
            label_key: None,
            per_layer,
        }
    }

    pub fn with_label_key(mut self, key: impl Into<String>) -> Self {
        self.label_key = Some(key.into());
        self
    }

    pub fn len(&self) -> usize {
        self.per_layer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_layer.is_empty()
    }

    /// Per-layer means, `None` where the cell is missing.
    pub fn means(&self) -> Vec<Option<f64>> {
        self.per_layer.iter().map(|c| c.map(|s| s.mean)).collect()
    }
}
