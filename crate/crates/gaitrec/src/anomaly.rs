//! Distance-based anomaly scoring on feature vectors: k-means++ seeding,
//! Lloyd's iterations, and a per-cluster radius so that scores below zero
//! mean "inside the envelope of the training data".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Radii are floored here so single-point clusters still score finitely.
pub const RADIUS_FLOOR: f64 = 1e-6;
/// Lloyd's stops when no centroid moved at least this far.
pub const CONVERGENCE_EPSILON: f64 = 1e-6;
/// Hard cap on Lloyd's iterations.
pub const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyModel {
    pub k: usize,
    pub dim: usize,
    /// `k` centroids, each of length `dim`.
    pub centroids: Vec<Vec<f64>>,
    /// Greatest member-to-centroid distance per cluster, floored.
    pub radii: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum AnomalyError {
    #[error("need at least {k} points to fit {k} clusters, found {found}")]
    TooFewPoints { k: usize, found: usize },
    #[error("k must be positive")]
    ZeroClusters,
    #[error("points must share one dimension")]
    RaggedPoints,
    #[error("dimension mismatch: model expects {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in input")]
    NonFiniteValue,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties break toward the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = dist2(point, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d2 = dist2(point, c);
        if d2 < best_d2 {
            best = j;
            best_d2 = d2;
        }
    }
    (best, best_d2)
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the chosen set.
fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist2(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            // All mass collapsed (duplicate points): fall back to uniform.
            rng.gen_range(0..points.len())
        };
        centroids.push(points[chosen].clone());
        for (i, p) in points.iter().enumerate() {
            let nd = dist2(p, centroids.last().unwrap());
            if nd < d2[i] {
                d2[i] = nd;
            }
        }
    }
    centroids
}

/// Lloyd's algorithm. Returns the fitted model plus the inertia (sum of
/// squared distances to the assigned centroid) after each iteration.
pub fn fit_kmeans_with_history(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<(AnomalyModel, Vec<f64>), AnomalyError> {
    if k == 0 {
        return Err(AnomalyError::ZeroClusters);
    }
    if points.len() < k {
        return Err(AnomalyError::TooFewPoints {
            k,
            found: points.len(),
        });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(AnomalyError::RaggedPoints);
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnomalyError::NonFiniteValue);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut assignment = vec![0usize; points.len()];
    let mut inertia_history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (j, d2) = nearest(p, &centroids);
            assignment[i] = j;
            inertia += d2;
        }
        inertia_history.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assignment) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut max_shift2: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue; // empty cluster keeps its previous centroid
            }
            let inv = 1.0 / counts[j] as f64;
            for s in sums[j].iter_mut() {
                *s *= inv;
            }
            max_shift2 = max_shift2.max(dist2(&sums[j], &centroids[j]));
            centroids[j] = std::mem::take(&mut sums[j]);
        }
        if max_shift2.sqrt() < CONVERGENCE_EPSILON {
            break;
        }
    }

    // Final assignment against the last centroid update, then the radius:
    // the farthest member of each cluster, floored for degenerate clusters.
    let mut radii = vec![0.0f64; k];
    for p in points {
        let (j, d2) = nearest(p, &centroids);
        radii[j] = radii[j].max(d2.sqrt());
    }
    for r in radii.iter_mut() {
        *r = r.max(RADIUS_FLOOR);
    }

    Ok((
        AnomalyModel {
            k,
            dim,
            centroids,
            radii,
        },
        inertia_history,
    ))
}

pub fn fit_kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<AnomalyModel, AnomalyError> {
    fit_kmeans_with_history(points, k, seed).map(|(m, _)| m)
}

impl AnomalyModel {
    /// Radius-normalized distance to the nearest cluster, shifted so that
    /// a point at a centroid scores −1, on the cluster boundary 0, and
    /// outside the envelope positive.
    pub fn score(&self, point: &[f64]) -> Result<f64, AnomalyError> {
        if point.len() != self.dim {
            return Err(AnomalyError::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        let mut best = f64::INFINITY;
        for (c, &r) in self.centroids.iter().zip(&self.radii) {
            best = best.min(dist2(point, c).sqrt() / r);
        }
        Ok(best - 1.0)
    }
}
