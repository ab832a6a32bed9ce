use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::concept::Concept;
use crate::geometry::mean_ci;
use crate::metric::{LayerStat, MetricKind, MetricSeries};
use crate::seed::derive_seed;
use crate::trace::{LesionRecord, SaliencyProfileRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyProfile {
    pub series: MetricSeries,
    /// Per-layer mean divided by its maximum over layers.
    pub normalized: Vec<Option<f64>>,
}

/// Per-layer bootstrap mean over `(sort key, value)` cells, independent of
/// record order.
fn layer_means(
    mut cells: Vec<Vec<(String, f64)>>,
    label: &str,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<Option<LayerStat>>, CausalError> {
    cells
        .par_iter_mut()
        .enumerate()
        .map(|(layer, cell)| {
            if cell.is_empty() {
                return Ok(None);
            }
            cell.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.to_bits().cmp(&b.1.to_bits())));
            let values: Vec<f64> = cell.iter().map(|c| c.1).collect();
            let est = mean_ci(&values, n_resamples, derive_seed(seed, &format!("{label}/{layer}")))?;
            Ok(Some(est.into()))
        })
        .collect()
}

pub fn saliency_profile(
    records: &[SaliencyProfileRecord],
    concept: Concept,
    n_resamples: usize,
    seed: u64,
) -> Result<SaliencyProfile, CausalError> {
    let first = records.first().ok_or(CausalError::NoRecords)?;
    let n_layers = first.per_layer.len();
    let mut cells = vec![Vec::with_capacity(records.len()); n_layers];
    for rec in records {
        if rec.per_layer.len() != n_layers {
            return Err(CausalError::LayerCount {
                id: rec.prompt_id.clone(),
                expected: n_layers,
                actual: rec.per_layer.len(),
            });
        }
        for (layer, &value) in rec.per_layer.iter().enumerate() {
            if !value.is_finite() {
                return Err(CausalError::NonFinite {
                    id: rec.prompt_id.clone(),
                });
            }
            if value < 0.0 {
                return Err(CausalError::NegativeSaliency {
                    id: rec.prompt_id.clone(),
                    layer,
                    value,
                });
            }
            cells[layer].push((rec.prompt_id.clone(), value));
        }
    }
    let per_layer = layer_means(cells, "saliency", n_resamples, seed)?;
    let peak = per_layer.iter().flatten().map(|s| s.mean).fold(0.0, f64::max);
    let normalized = per_layer
        .iter()
        .map(|c| c.map(|s| if peak > 0.0 { s.mean / peak } else { 0.0 }))
        .collect();
    Ok(SaliencyProfile {
        series: MetricSeries::new(MetricKind::Saliency, concept, per_layer),
        normalized,
    })
}

/// Mean judge score per lesioned block; blocks never lesioned are missing.
pub fn lesion_profile(
    records: &[LesionRecord],
    concept: Concept,
    n_layers: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<MetricSeries, CausalError> {
    if records.is_empty() {
        return Err(CausalError::NoRecords);
    }
    let mut cells = vec![Vec::new(); n_layers];
    for rec in records {
        let id = rec.prompt_id.clone();
        if rec.layer >= n_layers {
            return Err(CausalError::LayerOutOfRange {
                id,
                layer: rec.layer,
                n_layers,
            });
        }
        let score = rec.judge_score.ok_or_else(|| CausalError::Unscored {
            id: id.clone(),
            layer: rec.layer,
        })?;
        if !(1..=10).contains(&score) {
            return Err(CausalError::ScoreOutOfRange {
                id,
                layer: rec.layer,
                score,
            });
        }
        cells[rec.layer].push((id, f64::from(score)));
    }
    let per_layer = layer_means(cells, "lesioning", n_resamples, seed)?;
    Ok(MetricSeries::new(MetricKind::Lesioning, concept, per_layer))
}
