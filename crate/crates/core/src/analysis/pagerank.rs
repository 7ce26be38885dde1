use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, InteractionGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        Self { damping: 0.85, tol: 1e-9, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRank {
    pub scores: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration over a sparse adjacency. Self-loops are ignored and
/// dangling mass is spread uniformly.
pub fn pagerank(g: &InteractionGraph, params: PageRankParams) -> Result<PageRank, AnalysisError> {
    let n = g.len();
    if n == 0 {
        return Err(AnalysisError::EmptyGraph);
    }
    let edges: Vec<(usize, usize, f64)> = g.edges().filter(|(s, d, w)| s != d && *w > 0.0).collect();
    let mut out_w = vec![0f64; n];
    for (s, _, w) in &edges {
        out_w[*s] += w;
    }
    let nf = n as f64;
    let d = params.damping;
    let mut r = vec![1.0 / nf; n];
    let mut next = vec![0f64; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|i| out_w[*i] == 0.0).map(|i| r[i]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for (s, t, w) in &edges {
            next[*t] += d * r[*s] * w / out_w[*s];
        }
        let delta: f64 = r.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut r, &mut next);
        if delta < params.tol {
            converged = true;
            break;
        }
    }
    let total: f64 = r.iter().sum();
    let scores = g.nodes().iter().zip(r).map(|(name, s)| (name.clone(), s / total)).collect();
    Ok(PageRank { scores, iterations, converged })
}
