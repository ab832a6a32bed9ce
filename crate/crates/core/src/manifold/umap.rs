//! Uniform manifold approximation and projection.
//!
//! The pipeline is the standard one: exact k-NN, per-point bandwidths by
//! binary search, fuzzy union of the directed memberships, spectral
//! initialization and a single-threaded SGD layout with negative sampling.
//! Every random draw comes from one seeded generator, so identical inputs
//! and seeds give bit-identical coordinates.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::knn::knn_graph;
use super::spectral::{spectral_layout, SymGraph};
use super::ManifoldError;
use crate::seed::rng_from_seed;

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const BANDWIDTH_ITERS: usize = 64;
const SPREAD: f64 = 1.0;
const NEGATIVE_SAMPLE_RATE: usize = 5;
const INITIAL_ALPHA: f64 = 1.0;
const GRAD_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmapParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
}

impl Default for UmapParams {
    fn default() -> Self {
        UmapParams {
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub dim: usize,
    pub points: Array2<f64>,
    pub seed: u64,
    pub params: UmapParams,
}

impl Embedding {
    /// Row-major nested vectors, for JSON export.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points.outer_iter().map(|r| r.to_vec()).collect()
    }
}

/// Fits `a`, `b` of `1 / (1 + a d^(2b))` to the offset-exponential target
/// curve by damped Gauss-Newton least squares.
pub fn fit_curve_params(min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * SPREAD * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / SPREAD).exp()
            }
        })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // Normal equations J^T J delta = -J^T r.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            let u = if x > 0.0 { x.powf(2.0 * b) } else { 0.0 };
            let g = 1.0 / (1.0 + a * u);
            let r = g - y;
            let da = -u * g * g;
            let db = if x > 0.0 { -a * u * 2.0 * x.ln() * g * g } else { 0.0 };
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let new_cost = sse(na, nb);
                if new_cost < cost {
                    let converged = (cost - new_cost) < 1e-15 * cost.max(1e-300);
                    a = na;
                    b = nb;
                    cost = new_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !converged;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

/// Per-point `(sigma, rho)` such that the memberships of the k neighbors
/// sum to `log2(k)`.
fn smooth_knn_dist(distances: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = distances.dim();
    let target = (k as f64).log2();
    let mean_all = distances.iter().sum::<f64>() / (n * k) as f64;
    let mut sigmas = Vec::with_capacity(n);
    let mut rhos = Vec::with_capacity(n);
    for row in distances.outer_iter() {
        let rho = row.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
        for _ in 0..BANDWIDTH_ITERS {
            let psum: f64 = row
                .iter()
                .map(|&d| {
                    let gap = d - rho;
                    if gap > 0.0 {
                        (-gap / mid).exp()
                    } else {
                        1.0
                    }
                })
                .sum();
            if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        let row_mean = row.iter().sum::<f64>() / k as f64;
        let floor = if rho > 0.0 {
            MIN_K_DIST_SCALE * row_mean
        } else {
            MIN_K_DIST_SCALE * mean_all
        };
        sigmas.push(mid.max(floor));
        rhos.push(rho);
    }
    (sigmas, rhos)
}

/// Fuzzy union `A + A^T - A∘A^T` of the directed membership graph, as a
/// sorted symmetric edge list `(i, j, w)` with both directions present.
fn fuzzy_graph(points: ArrayView2<f64>, k: usize) -> Result<Vec<(usize, usize, f64)>, ManifoldError> {
    let knn = knn_graph(points, k)?;
    let (sigmas, rhos) = smooth_knn_dist(&knn.distances);
    let mut directed = std::collections::BTreeMap::new();
    for i in 0..knn.n {
        for slot in 0..k {
            let j = knn.indices[[i, slot]];
            let d = knn.distances[[i, slot]];
            let w = if d - rhos[i] <= 0.0 || sigmas[i] == 0.0 {
                1.0
            } else {
                (-(d - rhos[i]) / sigmas[i]).exp()
            };
            directed.insert((i, j), w);
        }
    }
    let mut edges = Vec::with_capacity(2 * directed.len());
    let mut seen = std::collections::BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let wt = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let sym = w + wt - w * wt;
        seen.insert((i, j), sym);
        seen.insert((j, i), sym);
    }
    for ((i, j), w) in seen {
        if !w.is_finite() {
            return Err(ManifoldError::NonFinite { stage: "fuzzy graph" });
        }
        if w > 0.0 {
            edges.push((i, j, w));
        }
    }
    Ok(edges)
}

fn rescale_to_box(coords: &mut Array2<f64>) {
    for mut col in coords.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        col.mapv_inplace(|x| if span > 0.0 { 10.0 * (x - lo) / span } else { 0.0 });
    }
}

fn initial_layout<R: Rng>(edges: &[(usize, usize, f64)], n: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j, w) in edges {
        adj[i].push((j, w));
    }
    let graph = SymGraph { n, adj };
    let mut coords = match spectral_layout(&graph, dim, rng) {
        Some(mut spectral) => {
            let max_abs = spectral.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let expansion = if max_abs > 0.0 { 10.0 / max_abs } else { 1.0 };
            spectral.mapv_inplace(|x| x * expansion);
            for x in spectral.iter_mut() {
                *x += 1e-4 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            spectral
        }
        None => Array2::from_shape_fn((n, dim), |_| rng.random_range(-10.0..10.0)),
    };
    rescale_to_box(&mut coords);
    coords
}

fn validate(points: ArrayView2<f64>, dim: usize, params: &UmapParams) -> Result<(), ManifoldError> {
    if dim == 0 {
        return Err(ManifoldError::ZeroDimension);
    }
    let needed = (params.n_neighbors + 1).max(4);
    if points.nrows() < needed {
        return Err(ManifoldError::TooFewPoints {
            n: points.nrows(),
            needed,
        });
    }
    if params.n_neighbors == 0 {
        return Err(ManifoldError::BadNeighborCount {
            k: 0,
            n: points.nrows(),
        });
    }
    super::knn::check_finite(points)
}

/// The starting layout `umap_embed` optimizes from: spectral when the
/// fuzzy graph is connected, seeded uniform otherwise, rescaled to
/// `[0, 10]` per axis.
pub fn initialize(
    points: ArrayView2<f64>,
    dim: usize,
    params: &UmapParams,
    seed: u64,
) -> Result<Array2<f64>, ManifoldError> {
    validate(points, dim, params)?;
    let edges = fuzzy_graph(points, params.n_neighbors)?;
    let mut rng = rng_from_seed(seed);
    Ok(initial_layout(&edges, points.nrows(), dim, &mut rng))
}

#[inline]
fn clip(x: f64) -> f64 {
    x.clamp(-GRAD_CLIP, GRAD_CLIP)
}

#[inline]
fn sq_dist(emb: &Array2<f64>, a: usize, b: usize) -> f64 {
    emb.row(a)
        .iter()
        .zip(emb.row(b).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Embeds `points` (n × d) into `dim` dimensions.
pub fn umap_embed(
    points: ArrayView2<f64>,
    dim: usize,
    params: &UmapParams,
    seed: u64,
) -> Result<Embedding, ManifoldError> {
    validate(points, dim, params)?;
    let n = points.nrows();
    let mut edges = fuzzy_graph(points, params.n_neighbors)?;
    let mut rng = rng_from_seed(seed);
    let mut emb = initial_layout(&edges, n, dim, &mut rng);

    if params.n_epochs > 0 && !edges.is_empty() {
        let (a, b) = fit_curve_params(params.min_dist);
        let max_w = edges.iter().map(|e| e.2).fold(0.0, f64::max);
        let cutoff = max_w / params.n_epochs as f64;
        edges.retain(|e| e.2 >= cutoff);

        let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
        let epochs_per_negative: Vec<f64> = epochs_per_sample
            .iter()
            .map(|e| e / NEGATIVE_SAMPLE_RATE as f64)
            .collect();
        let mut next_sample = epochs_per_sample.clone();
        let mut next_negative = epochs_per_negative.clone();
        let mut delta = vec![0.0; dim];

        for epoch in 0..params.n_epochs {
            let alpha = INITIAL_ALPHA * (1.0 - epoch as f64 / params.n_epochs as f64);
            let epoch_f = epoch as f64;
            for (e, &(head, tail, _)) in edges.iter().enumerate() {
                if next_sample[e] > epoch_f {
                    continue;
                }
                let d2 = sq_dist(&emb, head, tail);
                if d2 > 0.0 {
                    let coeff = -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0);
                    for (c, dlt) in delta.iter_mut().enumerate() {
                        *dlt = clip(coeff * (emb[[head, c]] - emb[[tail, c]])) * alpha;
                    }
                    for (c, dlt) in delta.iter().enumerate() {
                        emb[[head, c]] += dlt;
                        emb[[tail, c]] -= dlt;
                    }
                }
                next_sample[e] += epochs_per_sample[e];

                let n_neg = ((epoch_f - next_negative[e]) / epochs_per_negative[e]).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let other = rng.random_range(0..n);
                    if other == head {
                        continue;
                    }
                    let d2 = sq_dist(&emb, head, other);
                    if d2 <= 0.0 {
                        continue;
                    }
                    let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    for c in 0..dim {
                        let g = clip(coeff * (emb[[head, c]] - emb[[other, c]]));
                        emb[[head, c]] += g * alpha;
                    }
                }
                next_negative[e] += n_neg as f64 * epochs_per_negative[e];
            }
        }
    }

    if emb.iter().any(|x| !x.is_finite()) {
        return Err(ManifoldError::NonFinite {
            stage: "layout optimization",
        });
    }
    Ok(Embedding {
        dim,
        points: emb,
        seed,
        params: *params,
    })
}
