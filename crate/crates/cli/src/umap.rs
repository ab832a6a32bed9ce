//! Per-concept, per-layer UMAP metrics over activation bundles.

use std::collections::BTreeMap;

use medmap_core::geometry::{
    age_linear_fit, bootstrap_ci, circularity_stats, encode_labels, label_contrast, local_anisotropy_per_point,
    mean_ci, pairwise_distances, silhouette_indexed, stage_circularity, Circularity, LabelContrast,
};
use medmap_core::manifold::umap_embed;
use medmap_core::prompt::PromptRecord;
use medmap_core::seed::derive_seed;
use medmap_core::trace::ActivationTrace;
use medmap_core::{Concept, LayerStat, MetricKind, MetricSeries};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::MetricParams;
use crate::error::CliError;

/// Activations of one concept's prompts, kept in single precision until a
/// row is embedded.
pub(crate) struct ConceptActivations<'a> {
    pub concept: Concept,
    pub prompts: Vec<&'a PromptRecord>,
    pub traces: Vec<ActivationTrace>,
    /// Trace rows per prompt: `n_layers + 1`.
    pub n_rows: usize,
}

impl ConceptActivations<'_> {
    fn row_matrix(&self, row: usize) -> Array2<f64> {
        let d = self.traces.first().map_or(0, |t| t.hidden_dim());
        Array2::from_shape_fn((self.traces.len(), d), |(i, j)| f64::from(self.traces[i].row(row)[j]))
    }
}

pub(crate) struct ConceptOutcome {
    pub series: Vec<MetricSeries>,
    pub details: BTreeMap<String, Value>,
    /// 2-D embeddings per row, when computed.
    pub planar: Option<Vec<Array2<f64>>>,
}

#[derive(Serialize)]
struct AgeFit {
    r_squared: f64,
    residuals: Vec<f64>,
}

#[derive(Default)]
struct RowResult {
    silhouettes: Vec<LayerStat>,
    contrast: Option<LabelContrast>,
    anisotropy: Option<LayerStat>,
    age_fit: Option<AgeFit>,
    circularity: BTreeMap<String, Option<Circularity>>,
    planar: Option<Array2<f64>>,
}

fn text_labels(prompts: &[&PromptRecord], key: &str) -> Result<Vec<String>, CliError> {
    prompts
        .iter()
        .map(|p| {
            p.label(key)
                .map(|v| v.render())
                .ok_or_else(|| CliError::new("prompt-forge", format!("missing label `{key}`")).record(&p.prompt_id))
        })
        .collect()
}

fn numeric_labels(prompts: &[&PromptRecord], key: &str) -> Result<Vec<f64>, CliError> {
    prompts
        .iter()
        .map(|p| {
            p.label(key).and_then(|v| v.as_f64()).ok_or_else(|| {
                CliError::new("prompt-forge", format!("missing numeric label `{key}`")).record(&p.prompt_id)
            })
        })
        .collect()
}

pub(crate) fn analyze_concept(
    data: &ConceptActivations,
    params: &MetricParams,
    seed: u64,
    export: bool,
) -> Result<ConceptOutcome, CliError> {
    let concept = data.concept;
    let keys: Vec<String> = params.label_keys.get(&concept).cloned().unwrap_or_default();
    let labels: Vec<Vec<String>> = keys
        .iter()
        .map(|k| text_labels(&data.prompts, k))
        .collect::<Result<_, _>>()?;
    let coded: Vec<(Vec<usize>, usize)> = labels.iter().map(|l| encode_labels(l)).collect();
    let contrast_keys = (concept == Concept::Drugs)
        .then(|| {
            let a = keys.iter().position(|k| k == "specialty")?;
            let b = keys.iter().position(|k| k == "mechanism")?;
            Some((a, b))
        })
        .flatten();
    let ages = if concept == Concept::Age {
        Some(numeric_labels(&data.prompts, "age")?)
    } else {
        None
    };
    let stages = if concept == Concept::Progression {
        let diseases = text_labels(&data.prompts, "disease")?;
        let stages = numeric_labels(&data.prompts, "stage")?;
        let mut by_disease: BTreeMap<String, (Vec<usize>, Vec<u8>)> = BTreeMap::new();
        for (i, (d, s)) in diseases.into_iter().zip(stages).enumerate() {
            let e = by_disease.entry(d).or_default();
            e.0.push(i);
            e.1.push(if (0.0..=255.0).contains(&s) { s as u8 } else { 0 });
        }
        Some(by_disease)
    } else {
        None
    };
    let planar_needed = ages.is_some() || stages.is_some() || export;
    let n = data.prompts.len();
    let layer_ctx = |row: usize| format!("{concept} layer {row}");

    let results: Vec<RowResult> = (0..data.n_rows)
        .into_par_iter()
        .map(|row| -> Result<RowResult, CliError> {
            let x = data.row_matrix(row);
            let manifold_err =
                |e: medmap_core::manifold::ManifoldError| CliError::new("manifold", e).record(layer_ctx(row));
            let geom_err =
                |e: medmap_core::geometry::GeometryError| CliError::new("geometry-metrics", e).record(layer_ctx(row));
            let mut out = RowResult::default();

            if !keys.is_empty() {
                let dim = params.silhouette_dim;
                let emb = umap_embed(
                    x.view(),
                    dim,
                    &params.umap,
                    derive_seed(seed, &format!("layer/{row}/d{dim}")),
                )
                .map_err(manifold_err)?;
                let dist = pairwise_distances(emb.points.view());
                for (key, (codes, m)) in keys.iter().zip(&coded) {
                    let est = bootstrap_ci(
                        n,
                        params.n_resamples,
                        derive_seed(seed, &format!("layer/{row}/silhouette/{key}")),
                        |idx| silhouette_indexed(dist.view(), codes, *m, idx),
                    )
                    .map_err(geom_err)?;
                    out.silhouettes.push(est.into());
                }
                if let Some((a, b)) = contrast_keys {
                    let c = label_contrast(
                        emb.points.view(),
                        &labels[a],
                        &labels[b],
                        params.n_resamples,
                        derive_seed(seed, &format!("layer/{row}/contrast")),
                    )
                    .map_err(geom_err)?;
                    out.contrast = Some(c);
                }
            }

            if planar_needed {
                let emb = umap_embed(x.view(), 2, &params.umap, derive_seed(seed, &format!("layer/{row}/d2")))
                    .map_err(manifold_err)?;
                if let Some(ages) = &ages {
                    let per_point =
                        local_anisotropy_per_point(emb.points.view(), params.anisotropy_k).map_err(geom_err)?;
                    let est = mean_ci(
                        &per_point,
                        params.n_resamples,
                        derive_seed(seed, &format!("layer/{row}/anisotropy")),
                    )
                    .map_err(geom_err)?;
                    out.anisotropy = Some(est.into());
                    let fit = age_linear_fit(emb.points.view(), ages).map_err(geom_err)?;
                    out.age_fit = Some(AgeFit {
                        r_squared: fit.r_squared,
                        residuals: fit.residuals,
                    });
                }
                if let Some(by_disease) = &stages {
                    for (disease, (idx, st)) in by_disease {
                        let pts = emb.points.select(ndarray::Axis(0), idx);
                        out.circularity
                            .insert(disease.clone(), stage_circularity(pts.view(), st).ok());
                    }
                }
                out.planar = Some(emb.points);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut series = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        let per_layer = results.iter().map(|r| Some(r.silhouettes[k])).collect();
        series.push(MetricSeries::new(MetricKind::UmapSilhouette, concept, per_layer).with_label_key(key.clone()));
    }
    let mut details = BTreeMap::new();
    if ages.is_some() {
        series.push(MetricSeries::new(
            MetricKind::UmapAnisotropy,
            concept,
            results.iter().map(|r| r.anisotropy).collect(),
        ));
        let fits: Vec<&AgeFit> = results.iter().filter_map(|r| r.age_fit.as_ref()).collect();
        details.insert("age_linear_fit".into(), json!(fits));
    }
    if contrast_keys.is_some() {
        let c: Vec<&LabelContrast> = results.iter().filter_map(|r| r.contrast.as_ref()).collect();
        details.insert(
            "label_contrast".into(),
            json!({"labels": ["specialty", "mechanism"], "per_layer": c}),
        );
    }
    if let Some(by_disease) = &stages {
        let mut per_disease: BTreeMap<String, Vec<Option<Circularity>>> = BTreeMap::new();
        for d in by_disease.keys() {
            per_disease.insert(d.clone(), results.iter().map(|r| r.circularity[d]).collect());
        }
        details.insert("circularity".into(), json!(circularity_stats(per_disease)));
    }
    let planar = if export {
        Some(results.into_iter().filter_map(|r| r.planar).collect())
    } else {
        None
    };
    Ok(ConceptOutcome {
        series,
        details,
        planar,
    })
}
