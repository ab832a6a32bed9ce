use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CausalError;
use crate::concept::Concept;
use crate::geometry::mean_ci;
use crate::metric::{LayerStat, MetricKind, MetricSeries};
use crate::seed::derive_seed;
use crate::trace::{PatchRecord, PatchSite};

pub const PATCH_EPSILON: f64 = 1e-6;
pub const SUCCESS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchingEffect {
    pub pair_id: String,
    pub layer: usize,
    pub site: PatchSite,
    pub effect: f64,
    pub success: bool,
}

/// `Logit(r) - Logit(r')`.
pub fn logit_difference(r: f64, rp: f64) -> f64 {
    r - rp
}

/// Normalized logit difference `(LD_pt - LD_*) / (LD_cl - LD_*)`.
pub fn patching_effect(record: &PatchRecord) -> Result<PatchingEffect, CausalError> {
    patching_effect_with(record, PATCH_EPSILON)
}

pub fn patching_effect_with(record: &PatchRecord, epsilon: f64) -> Result<PatchingEffect, CausalError> {
    if record.logits().iter().any(|x| !x.is_finite()) {
        return Err(CausalError::NonFinite {
            id: record.pair_id.clone(),
        });
    }
    let ld_clean = logit_difference(record.logit_clean_r, record.logit_clean_rp);
    let ld_corrupt = logit_difference(record.logit_corrupt_r, record.logit_corrupt_rp);
    let ld_patched = logit_difference(record.logit_patched_r, record.logit_patched_rp);
    let denominator = ld_clean - ld_corrupt;
    if denominator.abs() <= epsilon {
        return Err(CausalError::Degenerate {
            pair_id: record.pair_id.clone(),
            layer: record.layer,
            site: record.site,
            denominator,
            epsilon,
        });
    }
    let effect = (ld_patched - ld_corrupt) / denominator;
    Ok(PatchingEffect {
        pair_id: record.pair_id.clone(),
        layer: record.layer,
        site: record.site,
        effect,
        success: effect > SUCCESS_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DegenerateRecord {
    pub pair_id: String,
    pub layer: usize,
    pub site: PatchSite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchingProfile {
    pub per_site: BTreeMap<PatchSite, MetricSeries>,
    /// Both sites pooled per layer; the row used for the map.
    pub combined: MetricSeries,
    /// Share of records with `P > 0.5`, per site and layer.
    pub success_fraction: BTreeMap<PatchSite, Vec<Option<f64>>>,
    pub n_valid: usize,
    /// Records excluded because `|LD_clean - LD_corrupt|` was below epsilon.
    pub degenerate: Vec<DegenerateRecord>,
}

impl PatchingProfile {
    /// Layer × site matrix of mean effects; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer");
        for site in PatchSite::ALL {
            out.push(',');
            out.push_str(site.as_str());
        }
        out.push('\n');
        let n = self.combined.len();
        for layer in 0..n {
            let _ = write!(out, "{layer}");
            for site in PatchSite::ALL {
                out.push(',');
                if let Some(stat) = self.per_site.get(&site).and_then(|s| s.per_layer[layer]) {
                    let _ = write!(out, "{}", stat.mean);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn canonical(mut cell: Vec<(String, f64)>) -> Vec<f64> {
    cell.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.to_bits().cmp(&b.1.to_bits())));
    cell.into_iter().map(|(_, v)| v).collect()
}

fn cell_stat(values: &[f64], n_resamples: usize, seed: u64) -> Result<Option<LayerStat>, CausalError> {
    if values.is_empty() {
        return Ok(None);
    }
    Ok(Some(mean_ci(values, n_resamples, seed)?.into()))
}

/// Per-(layer, site) mean effect with bootstrap CI and success fraction.
/// Result does not depend on record order.
pub fn patching_profile(
    records: &[PatchRecord],
    concept: Concept,
    n_layers: usize,
    n_resamples: usize,
    seed: u64,
) -> Result<PatchingProfile, CausalError> {
    if records.is_empty() {
        return Err(CausalError::NoRecords);
    }
    let mut cells: BTreeMap<(PatchSite, usize), Vec<(String, f64)>> = BTreeMap::new();
    let mut degenerate = Vec::new();
    for rec in records {
        if rec.layer >= n_layers {
            return Err(CausalError::LayerOutOfRange {
                id: rec.pair_id.clone(),
                layer: rec.layer,
                n_layers,
            });
        }
        match patching_effect(rec) {
            Ok(e) => cells.entry((e.site, e.layer)).or_default().push((e.pair_id, e.effect)),
            Err(CausalError::Degenerate {
                pair_id, layer, site, ..
            }) => degenerate.push(DegenerateRecord { pair_id, layer, site }),
            Err(other) => return Err(other),
        }
    }
    degenerate.sort();
    let n_valid = records.len() - degenerate.len();

    let site_cells: BTreeMap<(PatchSite, usize), Vec<f64>> =
        cells.iter().map(|(k, v)| (*k, canonical(v.clone()))).collect();
    let pooled: Vec<Vec<f64>> = (0..n_layers)
        .map(|layer| {
            let mut all = Vec::new();
            for site in PatchSite::ALL {
                if let Some(v) = cells.get(&(site, layer)) {
                    all.extend(v.iter().cloned());
                }
            }
            canonical(all)
        })
        .collect();

    let mut per_site = BTreeMap::new();
    let mut success_fraction = BTreeMap::new();
    for site in PatchSite::ALL {
        let stats = (0..n_layers)
            .into_par_iter()
            .map(|layer| {
                let values = site_cells.get(&(site, layer)).map(Vec::as_slice).unwrap_or(&[]);
                cell_stat(
                    values,
                    n_resamples,
                    derive_seed(seed, &format!("patching/{}/{layer}", site.as_str())),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let fractions = (0..n_layers)
            .map(|layer| {
                site_cells
                    .get(&(site, layer))
                    .map(|v| v.iter().filter(|&&p| p > SUCCESS_THRESHOLD).count() as f64 / v.len() as f64)
            })
            .collect();
        per_site.insert(
            site,
            MetricSeries::new(MetricKind::Patching, concept, stats).with_label_key(site.as_str()),
        );
        success_fraction.insert(site, fractions);
    }
    let combined_stats = pooled
        .par_iter()
        .enumerate()
        .map(|(layer, values)| cell_stat(values, n_resamples, derive_seed(seed, &format!("patching/all/{layer}"))))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(PatchingProfile {
        per_site,
        combined: MetricSeries::new(MetricKind::Patching, concept, combined_stats),
        success_fraction,
        n_valid,
        degenerate,
    })
}
