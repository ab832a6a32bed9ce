//! LLM maps: per-concept layer intervals selected from metric series.
//!
//! The map's layer axis is the residual-stream row (`0..=n_layers`, row 0
//! being the embedding output). Embedding metrics are already indexed that
//! way; causal metrics are indexed by block, and block `l` writes row
//! `l + 1`, so their intervals are shifted by one when placed on the map.

mod render;
mod select;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{Analysis, Concept};
use crate::metric::{MetricKind, MetricSeries};

pub use render::render_map;
pub use select::{
    gaussian_kernel, gaussian_smooth, percentile_intervals, rising_window_interval, smooth_dense, Span,
    DEFAULT_MAX_INTERVALS, DEFAULT_MIN_LEN, DEFAULT_PERCENTILE, DEFAULT_SIGMA, DEFAULT_WINDOW,
};

pub const MAP_SCHEMA: &str = "llm-map/v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CartoError {
    #[error("series is empty")]
    Empty,
    #[error("every cell of the series is missing")]
    AllMissing,
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("window must be at least 1")]
    BadWindow,
    #[error("series of length {len} is too short, need {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("no window without missing cells")]
    NoValidWindow,
    #[error("percentile must lie in [0, 100], got {0}")]
    BadPercentile(f64),
    #[error("series has {valid} valid cells, need {needed}")]
    TooFewValid { valid: usize, needed: usize },
    #[error("{analysis} series for {concept} has {actual} cells, expected {expected}")]
    SeriesLength {
        analysis: MetricKind,
        concept: Concept,
        expected: usize,
        actual: usize,
    },
    #[error("no metric series given")]
    NoSeries,
    #[error("unsupported map format `{0}` (expected svg or json)")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapParams {
    pub sigma: f64,
    pub window: usize,
    pub percentile: f64,
    pub min_len: usize,
    pub max_intervals: usize,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams {
            sigma: DEFAULT_SIGMA,
            window: DEFAULT_WINDOW,
            percentile: DEFAULT_PERCENTILE,
            min_len: DEFAULT_MIN_LEN,
            max_intervals: DEFAULT_MAX_INTERVALS,
        }
    }
}

/// Inclusive interval on the map's layer axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInterval {
    pub start: usize,
    pub end: usize,
    pub source: MetricKind,
    pub concept: Concept,
    pub strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    RisingWindow,
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub analysis: Analysis,
    pub source: MetricKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_key: Option<String>,
    pub rule: SelectionRule,
    pub intervals: Vec<LayerInterval>,
    /// Set when the best rising window has a non-positive rate.
    #[serde(default)]
    pub no_rise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub params: MapParams,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    /// Age anisotropy intervals chosen by absolute level instead of increase.
    #[serde(default)]
    pub age_absolute_level: Vec<LayerInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmMap {
    pub schema: String,
    pub model_name: String,
    pub n_layers: usize,
    pub rows: BTreeMap<Concept, Vec<MapRow>>,
    pub metadata: MapMetadata,
}

fn analysis_of(kind: MetricKind) -> Analysis {
    match kind {
        MetricKind::UmapSilhouette | MetricKind::UmapAnisotropy => Analysis::Umap,
        MetricKind::Saliency => Analysis::Saliency,
        MetricKind::Lesioning => Analysis::Lesioning,
        MetricKind::Patching => Analysis::Patching,
    }
}

fn umap_kind_for(concept: Concept) -> MetricKind {
    if concept == Concept::Age {
        MetricKind::UmapAnisotropy
    } else {
        MetricKind::UmapSilhouette
    }
}

fn to_intervals(spans: &[Span], offset: usize, source: MetricKind, concept: Concept) -> Vec<LayerInterval> {
    spans
        .iter()
        .map(|s| LayerInterval {
            start: s.start + offset,
            end: s.end + offset,
            source,
            concept,
            strength: s.strength,
        })
        .collect()
}

/// Builds the map from metric series over a model with `n_layers` blocks.
/// Analyses that are missing or unusable for a concept are reported in the
/// metadata instead of failing the whole map.
pub fn assemble_map(
    model_name: &str,
    n_layers: usize,
    series: &[MetricSeries],
    params: &MapParams,
) -> Result<LlmMap, CartoError> {
    if series.is_empty() {
        return Err(CartoError::NoSeries);
    }
    for s in series {
        let expected = if s.analysis.is_embedding_metric() {
            n_layers + 1
        } else {
            n_layers
        };
        if s.len() != expected {
            return Err(CartoError::SeriesLength {
                analysis: s.analysis,
                concept: s.concept,
                expected,
                actual: s.len(),
            });
        }
    }

    let mut by_concept: BTreeMap<Concept, Vec<&MetricSeries>> = BTreeMap::new();
    for s in series {
        by_concept.entry(s.concept).or_default().push(s);
    }

    let mut metadata = MapMetadata {
        params: *params,
        warnings: Vec::new(),
        notes: Vec::new(),
        age_absolute_level: Vec::new(),
    };
    let mut rows = BTreeMap::new();
    for (concept, mut list) in by_concept {
        list.sort_by(|a, b| a.analysis.cmp(&b.analysis).then(a.label_key.cmp(&b.label_key)));
        let mut concept_rows = Vec::new();
        for analysis in Analysis::ALL {
            if analysis == Analysis::Umap && concept == Concept::Dosages {
                if list.iter().any(|s| s.analysis.is_embedding_metric()) {
                    metadata
                        .notes
                        .push("dosages: UMAP row omitted, dose values do not form clusters".into());
                }
                continue;
            }
            let wanted = match analysis {
                Analysis::Umap => umap_kind_for(concept),
                Analysis::Saliency => MetricKind::Saliency,
                Analysis::Lesioning => MetricKind::Lesioning,
                Analysis::Patching => MetricKind::Patching,
            };
            let matching: Vec<&&MetricSeries> = list.iter().filter(|s| s.analysis == wanted).collect();
            if matching.is_empty() {
                metadata.warnings.push(format!(
                    "{concept}: no {wanted} series, {} row omitted",
                    analysis.as_str()
                ));
                continue;
            }
            for s in matching {
                let label = s.label_key.as_deref().map(|k| format!(" ({k})")).unwrap_or_default();
                match build_row(s, params) {
                    Ok(row) => concept_rows.push(row),
                    Err(e) => metadata
                        .warnings
                        .push(format!("{concept}: {wanted}{label} row omitted: {e}")),
                }
                if s.analysis == MetricKind::UmapAnisotropy {
                    let level = gaussian_smooth(&s.means(), params.sigma).and_then(|sm| {
                        percentile_intervals(&sm, params.percentile, params.min_len, params.max_intervals)
                    });
                    match level {
                        Ok(spans) => metadata
                            .age_absolute_level
                            .extend(to_intervals(&spans, 0, s.analysis, concept)),
                        Err(e) => metadata
                            .warnings
                            .push(format!("{concept}: absolute-level anisotropy: {e}")),
                    }
                }
            }
        }
        for s in &list {
            if s.analysis.is_embedding_metric() && concept != Concept::Dosages && s.analysis != umap_kind_for(concept) {
                metadata
                    .notes
                    .push(format!("{concept}: {} series not used for the map", s.analysis));
            }
        }
        if !concept_rows.is_empty() {
            rows.insert(concept, concept_rows);
        }
    }

    Ok(LlmMap {
        schema: MAP_SCHEMA.to_string(),
        model_name: model_name.to_string(),
        n_layers,
        rows,
        metadata,
    })
}

fn build_row(s: &MetricSeries, params: &MapParams) -> Result<MapRow, CartoError> {
    let smoothed = gaussian_smooth(&s.means(), params.sigma)?;
    let offset = if s.analysis.is_embedding_metric() { 0 } else { 1 };
    let (rule, spans, no_rise) = if s.analysis.is_embedding_metric() {
        let w = rising_window_interval(&smoothed, params.window)?;
        (SelectionRule::RisingWindow, vec![w], w.strength <= 0.0)
    } else {
        let spans = percentile_intervals(&smoothed, params.percentile, params.min_len, params.max_intervals)?;
        (SelectionRule::Percentile, spans, false)
    };
    Ok(MapRow {
        analysis: analysis_of(s.analysis),
        source: s.analysis,
        label_key: s.label_key.clone(),
        rule,
        intervals: to_intervals(&spans, offset, s.analysis, s.concept),
        no_rise,
    })
}
