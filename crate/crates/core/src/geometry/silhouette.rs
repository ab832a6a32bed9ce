use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, Estimate};
use super::{check_rows, GeometryError};

/// Full Euclidean distance matrix; rows computed in parallel.
pub fn pairwise_distances(points: ArrayView2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.row(i);
            (0..n)
                .map(|j| {
                    pi.iter()
                        .zip(points.row(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    Array2::from_shape_vec((n, n), rows.concat()).expect("n*n entries")
}

/// Maps arbitrary ordered labels to dense codes `0..m` in sorted order.
pub fn encode_labels<L: Ord>(labels: &[L]) -> (Vec<usize>, usize) {
    let mut book: BTreeMap<&L, usize> = labels.iter().map(|l| (l, 0)).collect();
    for (code, slot) in book.values_mut().enumerate() {
        *slot = code;
    }
    let m = book.len();
    (labels.iter().map(|l| book[l]).collect(), m)
}

/// Mean silhouette of the multiset `idx` of points, given the full distance
/// matrix and dense label codes. Repeated indices count as distinct points
/// at distance 0 from each other. Singleton clusters contribute `s = 0`.
pub fn silhouette_indexed(
    dist: ArrayView2<f64>,
    codes: &[usize],
    n_labels: usize,
    idx: &[usize],
) -> Result<f64, GeometryError> {
    if idx.len() < 2 {
        return Err(GeometryError::TooFewPoints {
            n: idx.len(),
            needed: 2,
        });
    }
    let mut counts = vec![0usize; n_labels];
    for &i in idx {
        counts[codes[i]] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(GeometryError::SingleLabel);
    }

    let mut total = 0.0;
    let mut sums = vec![0.0; n_labels];
    for (p, &i) in idx.iter().enumerate() {
        let own = codes[i];
        if counts[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        let row = dist.row(i);
        for (q, &j) in idx.iter().enumerate() {
            if q != p {
                sums[codes[j]] += row[j];
            }
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..n_labels)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / idx.len() as f64)
}

/// Mean silhouette of `points` (one row per point) under `labels`.
pub fn silhouette<L: Ord>(points: ArrayView2<f64>, labels: &[L]) -> Result<f64, GeometryError> {
    if points.nrows() != labels.len() {
        return Err(GeometryError::LengthMismatch {
            points: points.nrows(),
            labels: labels.len(),
        });
    }
    check_rows(points)?;
    let (codes, m) = encode_labels(labels);
    let dist = pairwise_distances(points);
    let idx: Vec<usize> = (0..points.nrows()).collect();
    silhouette_indexed(dist.view(), &codes, m, &idx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelContrast {
    pub silhouette_a: f64,
    pub silhouette_b: f64,
    /// `silhouette_a - silhouette_b`, CI from resamples shared by both labelings.
    pub difference: Estimate,
}

/// Paired silhouette comparison of two labelings of the same points.
pub fn label_contrast<A: Ord, B: Ord>(
    points: ArrayView2<f64>,
    labels_a: &[A],
    labels_b: &[B],
    n_resamples: usize,
    seed: u64,
) -> Result<LabelContrast, GeometryError> {
    let n = points.nrows();
    for len in [labels_a.len(), labels_b.len()] {
        if len != n {
            return Err(GeometryError::LengthMismatch { points: n, labels: len });
        }
    }
    check_rows(points)?;
    let dist = pairwise_distances(points);
    let (ca, ma) = encode_labels(labels_a);
    let (cb, mb) = encode_labels(labels_b);
    let all: Vec<usize> = (0..n).collect();
    let silhouette_a = silhouette_indexed(dist.view(), &ca, ma, &all)?;
    let silhouette_b = silhouette_indexed(dist.view(), &cb, mb, &all)?;
    let difference = bootstrap_ci(n, n_resamples, seed, |idx| {
        Ok(silhouette_indexed(dist.view(), &ca, ma, idx)? - silhouette_indexed(dist.view(), &cb, mb, idx)?)
    })?;
    Ok(LabelContrast {
        silhouette_a,
        silhouette_b,
        difference,
    })
}
