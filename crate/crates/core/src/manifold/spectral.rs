//! Laplacian-eigenmap initialization by block subspace iteration.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Symmetric sparse weights in adjacency-list form.
pub(crate) struct SymGraph {
    pub n: usize,
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl SymGraph {
    pub fn n_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, w) in row {
                if w > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
        (0..self.n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

const MAX_ITERS: usize = 2000;
const TOL: f64 = 1e-8;

fn orthonormalize(cols: &mut [Vec<f64>], against: &[f64]) {
    for c in 0..cols.len() {
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            let p: f64 = cols[c].iter().zip(against).map(|(a, b)| a * b).sum();
            cols[c].iter_mut().zip(against).for_each(|(a, b)| *a -= p * b);
            for prev in 0..c {
                let (head, tail) = cols.split_at_mut(c);
                let q = &head[prev];
                let p: f64 = tail[0].iter().zip(q).map(|(a, b)| a * b).sum();
                tail[0].iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
            }
        }
        let norm = cols[c].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            cols[c].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Leading `dim` non-trivial eigenvectors of `D^-1/2 W D^-1/2` (equivalently
/// the smallest of the normalized Laplacian), one column per component.
/// `None` when the graph is disconnected or too small.
pub(crate) fn spectral_layout<R: Rng>(graph: &SymGraph, dim: usize, rng: &mut R) -> Option<Array2<f64>> {
    let n = graph.n;
    if n < dim + 2 || graph.n_components() != 1 {
        return None;
    }
    let degree: Vec<f64> = graph.adj.iter().map(|r| r.iter().map(|(_, w)| w).sum()).collect();
    if degree.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let total: f64 = degree.iter().sum();
    let trivial: Vec<f64> = degree.iter().map(|d| (d / total).sqrt()).collect();

    // (I + D^-1/2 W D^-1/2) / 2 has spectrum in [0, 1] with the same eigenvectors.
    let apply = |x: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let s: f64 = graph.adj[i].iter().map(|&(j, w)| w * inv_sqrt[j] * x[j]).sum();
            out[i] = 0.5 * (x[i] + inv_sqrt[i] * s);
        }
    };

    let block = (dim + 8).min(n - 1);
    let mut cols: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    orthonormalize(&mut cols, &trivial);

    let mut next = vec![vec![0.0; n]; block];
    let mut ritz = vec![0.0; block];
    for iter in 0..MAX_ITERS {
        for (c, out) in cols.iter().zip(next.iter_mut()) {
            apply(c, out);
        }
        // Rayleigh-Ritz on span(cols) every few steps.
        if iter % 10 == 9 || iter + 1 == MAX_ITERS {
            let h = DMatrix::from_fn(block, block, |a, b| {
                cols[a].iter().zip(&next[b]).map(|(x, y)| x * y).sum()
            });
            let h = (&h + h.transpose()) * 0.5;
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..block).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
            let rotate = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
                order
                    .iter()
                    .map(|&o| {
                        (0..n)
                            .map(|r| (0..block).map(|k| src[k][r] * eig.eigenvectors[(k, o)]).sum())
                            .collect()
                    })
                    .collect()
            };
            let rotated = rotate(&cols);
            let images = rotate(&next);
            for (slot, &o) in order.iter().enumerate() {
                ritz[slot] = eig.eigenvalues[o];
            }
            let residual = (0..dim)
                .map(|c| {
                    images[c]
                        .iter()
                        .zip(&rotated[c])
                        .map(|(y, x)| (y - ritz[c] * x).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            cols = rotated;
            if residual < TOL || iter + 1 == MAX_ITERS {
                break;
            }
            next = images;
        }
        std::mem::swap(&mut cols, &mut next);
        orthonormalize(&mut cols, &trivial);
    }

    let mut out = Array2::zeros((n, dim));
    for c in 0..dim {
        for r in 0..n {
            out[[r, c]] = cols[c][r];
        }
    }
    if out.iter().all(|x| x.is_finite()) {
        Some(out)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ring(n: usize) -> SymGraph {
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            let j = (i + 1) % n;
            adj[i].push((j, 1.0));
            adj[j].push((i, 1.0));
        }
        SymGraph { n, adj }
    }

    #[test]
    fn ring_embeds_as_a_circle() {
        // The first two non-trivial eigenvectors of a cycle graph are
        // cos/sin of the angle, so every point lands at the same radius.
        let g = ring(40);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let y = spectral_layout(&g, 2, &mut rng).unwrap();
        let radii: Vec<f64> = y.outer_iter().map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt()).collect();
        let mean = radii.iter().sum::<f64>() / radii.len() as f64;
        assert!(
            radii.iter().all(|r| (r - mean).abs() < 1e-6 * mean.max(1.0)),
            "{radii:?}"
        );
    }

    #[test]
    fn disconnected_graph_has_no_spectral_layout() {
        let mut g = ring(10);
        g.adj.push(Vec::new());
        g.n = 11;
        assert_eq!(g.n_components(), 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert!(spectral_layout(&g, 2, &mut rng).is_none());
    }
}
