use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::ManifoldError;

/// Exact Euclidean k-nearest-neighbor graph.
///
/// Rows of `indices`/`distances` are sorted by ascending distance, ties
/// broken by the lower point index. A point is never its own neighbor, but
/// duplicates of it may appear at distance 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub n: usize,
    pub k: usize,
    pub indices: Array2<usize>,
    pub distances: Array2<f64>,
}

pub(crate) fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_finite(points: ArrayView2<f64>) -> Result<(), ManifoldError> {
    match points.outer_iter().position(|r| r.iter().any(|x| !x.is_finite())) {
        Some(row) => Err(ManifoldError::NonFiniteInput { row }),
        None => Ok(()),
    }
}

/// Brute-force k-NN over all pairs; rows are processed in parallel.
pub fn knn_graph(points: ArrayView2<f64>, k: usize) -> Result<NeighborGraph, ManifoldError> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(ManifoldError::BadNeighborCount { k, n });
    }
    check_finite(points)?;

    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (euclidean(pi, points.row(j)), j))
                .collect();
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
            cand.sort_by(by_dist);
            cand
        })
        .collect();

    let mut indices = Array2::zeros((n, k));
    let mut distances = Array2::zeros((n, k));
    for (i, row) in rows.into_iter().enumerate() {
        for (slot, (d, j)) in row.into_iter().enumerate() {
            indices[[i, slot]] = j;
            distances[[i, slot]] = d;
        }
    }
    Ok(NeighborGraph {
        n,
        k,
        indices,
        distances,
    })
}
