use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::metric::LayerStat;
use crate::seed::{derive_seed, rng_from_seed};
use crate::stats::percentile_sorted;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;
const MAX_ATTEMPTS: usize = 10;

/// Point estimate on the full sample with a percentile 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Estimate {
    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

impl From<Estimate> for LayerStat {
    fn from(e: Estimate) -> Self {
        LayerStat {
            mean: e.mean,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            n: e.n,
        }
    }
}

/// Bootstraps `metric` over `n` units drawn with replacement.
///
/// `metric` receives the resampled unit indices. Resample `r` draws from its
/// own substream of `seed`, so the result does not depend on scheduling. A
/// resample on which `metric` fails is redrawn, at most 10 times in total.
/// The interval is widened if needed so that it contains the point estimate.
pub fn bootstrap_ci<F>(n: usize, n_resamples: usize, seed: u64, metric: F) -> Result<Estimate, GeometryError>
where
    F: Fn(&[usize]) -> Result<f64, GeometryError> + Sync,
{
    if n == 0 {
        return Err(GeometryError::EmptyData);
    }
    if n_resamples < MIN_RESAMPLES {
        return Err(GeometryError::TooFewResamples {
            got: n_resamples,
            min: MIN_RESAMPLES,
        });
    }
    let full: Vec<usize> = (0..n).collect();
    let point = metric(&full)?;

    let mut values = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &format!("resample/{r}")));
            let mut idx = vec![0usize; n];
            let mut last = None;
            for _ in 0..MAX_ATTEMPTS {
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
                match metric(&idx) {
                    Ok(v) => return Ok(v),
                    Err(e) => last = Some(e),
                }
            }
            Err(GeometryError::ResampleFailed {
                attempts: MAX_ATTEMPTS,
                last: Box::new(last.expect("at least one attempt")),
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    values.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&values, 2.5);
    let hi = percentile_sorted(&values, 97.5);
    Ok(Estimate {
        mean: point,
        ci_low: lo.min(point),
        ci_high: hi.max(point),
        n,
    })
}

/// Bootstrap interval of the sample mean.
pub fn mean_ci(values: &[f64], n_resamples: usize, seed: u64) -> Result<Estimate, GeometryError> {
    bootstrap_ci(values.len(), n_resamples, seed, |idx| {
        Ok(idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64)
    })
}
