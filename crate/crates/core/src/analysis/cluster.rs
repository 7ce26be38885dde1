//! k-means with k-means++ seeding.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub const MAX_ITER: usize = 100;
pub const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl Clustering {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Clusters non-null vectors. Input order does not matter; points are
/// processed by post id.
pub fn cluster_embeddings(vectors: &[(String, Vec<f32>)], k: usize, rng_seed: u64) -> Result<Clustering, AnalysisError> {
    let mut pts: Vec<(&str, Vec<f64>)> = vectors
        .iter()
        .filter(|(_, v)| v.iter().any(|x| *x != 0.0))
        .map(|(id, v)| (id.as_str(), v.iter().map(|x| f64::from(*x)).collect()))
        .collect();
    pts.sort_by(|a, b| a.0.cmp(b.0));
    let n = pts.len();
    if k == 0 || k > n {
        return Err(AnalysisError::BadK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(&p.1, &pts[chosen[0]].1)).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|i| d2[*i] > 0.0).expect("total > 0");
            }
            pick
        } else {
            // every point coincides with a centroid: take unused indices
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in pts.iter().enumerate() {
            d2[i] = d2[i].min(dist2(&p.1, &pts[next].1));
        }
    }
    let mut centroids: Vec<Vec<f64>> = chosen.iter().map(|i| pts[*i].1.clone()).collect();

    let dim = pts[0].1.len();
    let mut assign = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut inertia = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, cen)| (c, dist2(&p.1, cen)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            assign[i] = best;
            inertia += d;
        }
        history.push(inertia);
        let mut sums = vec![vec![0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in pts.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, x) in sums[assign[i]].iter_mut().zip(&p.1) {
                *s += x;
            }
        }
        let mut moved: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            moved = moved.max(dist2(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if moved < TOL || iterations >= MAX_ITER {
            break;
        }
    }
    let assignments = pts.iter().zip(&assign).map(|(p, c)| (p.0.to_string(), *c)).collect();
    Ok(Clustering { assignments, centroids, inertia_history: history, iterations })
}
