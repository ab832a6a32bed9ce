//! Interval selection rules over per-layer series.

use serde::{Deserialize, Serialize};

use super::CartoError;
use crate::stats::percentile_sorted;

pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_PERCENTILE: f64 = 75.0;
pub const DEFAULT_MIN_LEN: usize = 2;
pub const DEFAULT_MAX_INTERVALS: usize = 3;
const MIN_VALID_CELLS: usize = 4;

/// Inclusive layer range with the score that selected it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub strength: f64,
}

/// Truncated (radius ⌈3σ⌉) Gaussian kernel weights for offsets `-r..=r`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Gaussian smoothing renormalized over the valid cells under the kernel.
/// Missing cells neither contribute nor get filled.
pub fn gaussian_smooth(series: &[Option<f64>], sigma: f64) -> Result<Vec<Option<f64>>, CartoError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(CartoError::BadSigma(sigma));
    }
    if series.is_empty() {
        return Err(CartoError::Empty);
    }
    if series.iter().all(Option::is_none) {
        return Err(CartoError::AllMissing);
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let n = series.len() as i64;
    Ok((0..n)
        .map(|i| {
            series[i as usize]?;
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as i64 - radius;
                if (0..n).contains(&j) {
                    if let Some(v) = series[j as usize] {
                        acc += w * v;
                        norm += w;
                    }
                }
            }
            Some(acc / norm)
        })
        .collect())
}

/// [`gaussian_smooth`] for a series without missing cells.
pub fn smooth_dense(series: &[f64], sigma: f64) -> Result<Vec<f64>, CartoError> {
    let wrapped: Vec<Option<f64>> = series.iter().copied().map(Some).collect();
    Ok(gaussian_smooth(&wrapped, sigma)?
        .into_iter()
        .map(|v| v.expect("dense input"))
        .collect())
}

/// Window `[i, i + window - 1]` (`i ≥ 1`) maximizing the mean of the first
/// differences `s[j] - s[j-1]` for `j` in the window. Ties go to the
/// smallest `i`; windows touching a missing cell are skipped.
pub fn rising_window_interval(series: &[Option<f64>], window: usize) -> Result<Span, CartoError> {
    if window == 0 {
        return Err(CartoError::BadWindow);
    }
    if series.len() < window + 1 {
        return Err(CartoError::TooShort {
            len: series.len(),
            needed: window + 1,
        });
    }
    let diffs: Vec<Option<f64>> = (1..series.len()).map(|j| Some(series[j]? - series[j - 1]?)).collect();
    let mut best: Option<Span> = None;
    for start in 1..=series.len() - window {
        let mut sum = 0.0;
        let mut valid = true;
        for d in &diffs[start - 1..start - 1 + window] {
            match d {
                Some(v) => sum += v,
                None => {
                    valid = false;
                    break;
                }
            }
        }
        if !valid {
            continue;
        }
        let rate = sum / window as f64;
        if best.is_none_or(|b| rate > b.strength) {
            best = Some(Span {
                start,
                end: start + window - 1,
                strength: rate,
            });
        }
    }
    best.ok_or(CartoError::NoValidWindow)
}

/// Maximal runs strictly above the `p`-th percentile of the valid cells,
/// at least `min_len` long; the `max_n` runs with the highest mean are
/// returned ordered by start.
pub fn percentile_intervals(
    series: &[Option<f64>],
    p: f64,
    min_len: usize,
    max_n: usize,
) -> Result<Vec<Span>, CartoError> {
    if !(0.0..=100.0).contains(&p) {
        return Err(CartoError::BadPercentile(p));
    }
    let mut valid: Vec<f64> = series.iter().flatten().copied().collect();
    if valid.len() < MIN_VALID_CELLS {
        return Err(CartoError::TooFewValid {
            valid: valid.len(),
            needed: MIN_VALID_CELLS,
        });
    }
    valid.sort_by(f64::total_cmp);
    let threshold = percentile_sorted(&valid, p);

    let mut runs = Vec::new();
    let mut i = 0;
    while i < series.len() {
        if series[i].is_some_and(|v| v > threshold) {
            let start = i;
            let mut sum = 0.0;
            while i < series.len() && series[i].is_some_and(|v| v > threshold) {
                sum += series[i].expect("checked");
                i += 1;
            }
            let len = i - start;
            if len >= min_len.max(1) {
                runs.push(Span {
                    start,
                    end: i - 1,
                    strength: sum / len as f64,
                });
            }
        } else {
            i += 1;
        }
    }
    runs.sort_by(|a, b| b.strength.total_cmp(&a.strength).then(a.start.cmp(&b.start)));
    runs.truncate(max_n);
    runs.sort_by_key(|r| r.start);
    Ok(runs)
}
