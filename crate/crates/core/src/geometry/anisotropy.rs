use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{check_rows, GeometryError};
use crate::manifold::knn_graph;

pub const DEFAULT_ANISOTROPY_K: usize = 20;

/// `1 - λ2/λ1` for a symmetric 2×2 matrix `[[a, b], [b, c]]`; 0 when λ1 = 0.
fn anisotropy_2x2(a: f64, b: f64, c: f64) -> f64 {
    let half_trace = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l1 = half_trace + radius;
    let l2 = (half_trace - radius).max(0.0);
    if l1 <= 0.0 {
        0.0
    } else {
        (1.0 - l2 / l1).clamp(0.0, 1.0)
    }
}

/// Per-point anisotropy over the point plus its `k` nearest neighbors.
pub fn local_anisotropy_per_point(points: ArrayView2<f64>, k: usize) -> Result<Vec<f64>, GeometryError> {
    let n = points.nrows();
    if points.ncols() != 2 {
        return Err(GeometryError::Columns {
            expected: 2,
            actual: points.ncols(),
        });
    }
    if k == 0 || n <= k {
        return Err(GeometryError::BadK { k, n });
    }
    check_rows(points)?;
    let graph = knn_graph(points, k).map_err(|_| GeometryError::BadK { k, n })?;

    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let members: Vec<usize> = std::iter::once(i).chain(graph.indices.row(i).iter().copied()).collect();
            let m = members.len() as f64;
            let (mx, my) = members
                .iter()
                .fold((0.0, 0.0), |(sx, sy), &j| (sx + points[[j, 0]], sy + points[[j, 1]]));
            let (mx, my) = (mx / m, my / m);
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for &j in &members {
                let dx = points[[j, 0]] - mx;
                let dy = points[[j, 1]] - my;
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            anisotropy_2x2(sxx / m, sxy / m, syy / m)
        })
        .collect())
}

/// Mean of [`local_anisotropy_per_point`]; in `[0, 1]`.
pub fn local_anisotropy(points: ArrayView2<f64>, k: usize) -> Result<f64, GeometryError> {
    let per_point = local_anisotropy_per_point(points, k)?;
    Ok(per_point.iter().sum::<f64>() / per_point.len() as f64)
}
