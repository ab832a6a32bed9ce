use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_rows, GeometryError};

pub const N_STAGES: u8 = 9;

/// Closest stage to the first stage (stage 2 excluded) and to the last stage
/// (stage 8 excluded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circularity {
    pub csfs: u8,
    pub csls: u8,
}

/// Mean and population standard deviation across diseases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularitySummary {
    pub csfs_mean: f64,
    pub csfs_std: f64,
    pub csls_mean: f64,
    pub csls_std: f64,
    pub n_diseases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularityStats {
    /// Disease name → one entry per layer (`None` where the layer was unusable).
    pub per_disease: BTreeMap<String, Vec<Option<Circularity>>>,
    pub per_layer: Vec<Option<CircularitySummary>>,
}

/// `stages[r]` is the stage number of row `r` of `points`; every stage 1..=9
/// must appear exactly once. Ties go to the lower stage.
pub fn stage_circularity(points: ArrayView2<f64>, stages: &[u8]) -> Result<Circularity, GeometryError> {
    if points.nrows() != stages.len() {
        return Err(GeometryError::LengthMismatch {
            points: points.nrows(),
            labels: stages.len(),
        });
    }
    check_rows(points)?;
    let mut row_of = [usize::MAX; N_STAGES as usize + 1];
    for (r, &s) in stages.iter().enumerate() {
        if s == 0 || s > N_STAGES {
            return Err(GeometryError::StageOutOfRange(s));
        }
        if row_of[s as usize] != usize::MAX {
            return Err(GeometryError::DuplicateStage(s));
        }
        row_of[s as usize] = r;
    }
    if let Some(missing) = (1..=N_STAGES).find(|&s| row_of[s as usize] == usize::MAX) {
        return Err(GeometryError::MissingStage(missing));
    }

    let dist = |a: u8, b: u8| -> f64 {
        let (ra, rb) = (points.row(row_of[a as usize]), points.row(row_of[b as usize]));
        ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    };
    let closest = |anchor: u8, candidates: std::ops::RangeInclusive<u8>| -> u8 {
        let mut best = (f64::INFINITY, 0u8);
        for s in candidates {
            let d = dist(anchor, s);
            if d < best.0 {
                best = (d, s);
            }
        }
        best.1
    };
    Ok(Circularity {
        csfs: closest(1, 3..=N_STAGES),
        csls: closest(N_STAGES, 1..=N_STAGES - 2),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate_circularity(per_disease: &[Circularity]) -> Result<CircularitySummary, GeometryError> {
    if per_disease.is_empty() {
        return Err(GeometryError::NothingToAggregate);
    }
    let csfs: Vec<f64> = per_disease.iter().map(|c| f64::from(c.csfs)).collect();
    let csls: Vec<f64> = per_disease.iter().map(|c| f64::from(c.csls)).collect();
    let (csfs_mean, csfs_std) = mean_std(&csfs);
    let (csls_mean, csls_std) = mean_std(&csls);
    Ok(CircularitySummary {
        csfs_mean,
        csfs_std,
        csls_mean,
        csls_std,
        n_diseases: per_disease.len(),
    })
}

/// Aggregates per-disease, per-layer results layer by layer.
pub fn circularity_stats(per_disease: BTreeMap<String, Vec<Option<Circularity>>>) -> CircularityStats {
    let n_layers = per_disease.values().map(Vec::len).max().unwrap_or(0);
    let per_layer = (0..n_layers)
        .map(|l| {
            let at: Vec<Circularity> = per_disease
                .values()
                .filter_map(|v| v.get(l).copied().flatten())
                .collect();
            aggregate_circularity(&at).ok()
        })
        .collect();
    CircularityStats { per_disease, per_layer }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn monotone_line() {
        let pts = Array2::from_shape_fn((9, 1), |(i, _)| i as f64);
        let stages: Vec<u8> = (1..=9).collect();
        assert_eq!(
            stage_circularity(pts.view(), &stages).unwrap(),
            Circularity { csfs: 3, csls: 7 }
        );
    }

    #[test]
    fn unit_circle_closes_the_loop() {
        // Nine equally spaced points: stage 9 is the neighbor of stage 1.
        let step = std::f64::consts::TAU / 9.0;
        let pts = Array2::from_shape_fn((9, 2), |(i, j)| {
            if j == 0 {
                (step * i as f64).cos()
            } else {
                (step * i as f64).sin()
            }
        });
        let stages: Vec<u8> = (1..=9).collect();
        let c = stage_circularity(pts.view(), &stages).unwrap();
        assert_eq!(c, Circularity { csfs: 9, csls: 1 });
    }

    #[test]
    fn row_order_is_irrelevant() {
        let pts = Array2::from_shape_fn((9, 1), |(i, _)| (8 - i) as f64);
        let stages: Vec<u8> = (1..=9).rev().collect();
        assert_eq!(
            stage_circularity(pts.view(), &stages).unwrap(),
            Circularity { csfs: 3, csls: 7 }
        );
    }

    #[test]
    fn stage_validation() {
        let pts = Array2::<f64>::zeros((9, 2));
        let mut stages: Vec<u8> = (1..=9).collect();
        stages[4] = 4;
        assert_eq!(
            stage_circularity(pts.view(), &stages).unwrap_err(),
            GeometryError::DuplicateStage(4)
        );
        stages[4] = 10;
        assert_eq!(
            stage_circularity(pts.view(), &stages).unwrap_err(),
            GeometryError::StageOutOfRange(10)
        );
        stages[4] = 5;
        let eight = Array2::<f64>::zeros((8, 2));
        assert_eq!(
            stage_circularity(eight.view(), &stages[..8]).unwrap_err(),
            GeometryError::MissingStage(9)
        );
    }

    #[test]
    fn population_spread_across_diseases() {
        let c = |csfs| Circularity { csfs, csls: 7 };
        let s = aggregate_circularity(&[c(3), c(3), c(3), c(4)]).unwrap();
        assert_eq!(s.csfs_mean, 3.25);
        assert!((s.csfs_std - 0.4330127018922193).abs() < 1e-15);
        assert_eq!((s.csls_mean, s.csls_std), (7.0, 0.0));
    }
}
