use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_rows, GeometryError};

const RANK_TOLERANCE: f64 = 1e-12;

/// Least-squares fit `target ≈ intercept + coef · (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub r_squared: f64,
    pub intercept: f64,
    pub coefficients: [f64; 2],
    /// `target - prediction`, one per point.
    pub residuals: Vec<f64>,
}

/// Regresses `ages` on both embedding coordinates plus an intercept.
pub fn age_linear_fit(embedding: ArrayView2<f64>, ages: &[f64]) -> Result<LinearFit, GeometryError> {
    let n = embedding.nrows();
    if embedding.ncols() != 2 {
        return Err(GeometryError::Columns {
            expected: 2,
            actual: embedding.ncols(),
        });
    }
    if n != ages.len() {
        return Err(GeometryError::LengthMismatch {
            points: n,
            labels: ages.len(),
        });
    }
    if n < 3 {
        return Err(GeometryError::TooFewPoints { n, needed: 3 });
    }
    check_rows(embedding)?;

    let nf = n as f64;
    let mx = embedding.column(0).sum() / nf;
    let my = embedding.column(1).sum() / nf;
    let mt = ages.iter().sum::<f64>() / nf;
    if ages.iter().all(|&a| a == ages[0]) {
        return Err(GeometryError::ConstantTarget);
    }

    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (row, &t) in embedding.outer_iter().zip(ages) {
        let (dx, dy, dt) = (row[0] - mx, row[1] - my, t - mt);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxt += dx * dt;
        syt += dy * dt;
    }
    let half_trace = 0.5 * (sxx + syy);
    let radius = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let (l1, l2) = (half_trace + radius, half_trace - radius);
    if l1 <= 0.0 || l2 / l1 < RANK_TOLERANCE {
        return Err(GeometryError::RankDeficient);
    }
    let det = sxx * syy - sxy * sxy;
    let bx = (syy * sxt - sxy * syt) / det;
    let by = (sxx * syt - sxy * sxt) / det;
    let intercept = mt - bx * mx - by * my;

    let residuals: Vec<f64> = embedding
        .outer_iter()
        .zip(ages)
        .map(|(row, &t)| t - (intercept + bx * row[0] + by * row[1]))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ages.iter().map(|t| (t - mt) * (t - mt)).sum();
    Ok(LinearFit {
        r_squared: 1.0 - ss_res / ss_tot,
        intercept,
        coefficients: [bx, by],
        residuals,
    })
}
