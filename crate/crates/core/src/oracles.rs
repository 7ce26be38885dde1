//! Naive reference implementations used to cross-check the production
//! modules. Nothing here calls into the rest of the crate: inputs and
//! outputs are plain tuples, vectors and maps.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use unicode_segmentation::UnicodeSegmentation;

pub const MAX_POSTS: usize = 10_000;
pub const MAX_MODULARITY_NODES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large: {size} > {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("empty input")]
    Empty,
}

fn cap(size: usize, cap: usize) -> Result<(), OracleError> {
    if size > cap {
        Err(OracleError::CapExceeded { size, cap })
    } else {
        Ok(())
    }
}

/// Uncovered days of `target` as maximal runs `[start, end)`, computed by
/// materializing every day.
pub fn oracle_coverage(target: (NaiveDate, NaiveDate), covered: &[(NaiveDate, NaiveDate)]) -> Vec<(NaiveDate, NaiveDate)> {
    let mut days = BTreeSet::new();
    for (s, e) in covered {
        let mut d = *s;
        while d < *e {
            days.insert(d);
            d = d.succ_opt().unwrap();
        }
    }
    let mut gaps: Vec<(NaiveDate, NaiveDate)> = Vec::new();
    let mut d = target.0;
    while d < target.1 {
        if !days.contains(&d) {
            let next = d.succ_opt().unwrap();
            match gaps.last_mut() {
                Some(last) if last.1 == d => last.1 = next,
                _ => gaps.push((d, next)),
            }
        }
        d = d.succ_opt().unwrap();
    }
    gaps
}

fn words(text: &str) -> Vec<String> {
    text.unicode_words().map(|w| w.to_lowercase()).collect()
}

/// Okapi BM25 by direct evaluation of the formula for every document.
/// Corpus statistics use every document; `allowed` only restricts which
/// documents are returned. Ordered by score desc, then id asc.
pub fn oracle_bm25(
    docs: &[(String, String)],
    query: &str,
    allowed: Option<&BTreeSet<String>>,
    k: usize,
    k1: f64,
    b: f64,
) -> Result<Vec<(String, f64)>, OracleError> {
    cap(docs.len(), MAX_POSTS)?;
    let tokenized: Vec<(&str, Vec<String>)> = docs.iter().map(|(id, t)| (id.as_str(), words(t))).collect();
    let n = tokenized.len() as f64;
    if n == 0.0 {
        return Ok(Vec::new());
    }
    let avgdl = tokenized.iter().map(|(_, w)| w.len() as f64).sum::<f64>() / n;
    let mut terms = words(query);
    terms.sort();
    terms.dedup();
    let df: Vec<f64> = terms
        .iter()
        .map(|t| tokenized.iter().filter(|(_, w)| w.contains(t)).count() as f64)
        .collect();
    let mut out = Vec::new();
    for (id, toks) in &tokenized {
        if allowed.is_some_and(|a| !a.contains(*id)) {
            continue;
        }
        let dl = toks.len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for (t, df) in terms.iter().zip(&df) {
            let tf = toks.iter().filter(|w| *w == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
        }
        if matched {
            out.push((id.to_string(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out.truncate(k);
    Ok(out)
}

/// Exact cosine kNN. All-zero vectors are never returned.
pub fn oracle_knn(vectors: &[(String, Vec<f32>)], query: &[f32], k: usize) -> Result<Vec<(String, f64)>, OracleError> {
    cap(vectors.len(), MAX_POSTS)?;
    let norm = |v: &[f32]| v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    let qn = norm(query);
    if qn == 0.0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<(String, f64)> = vectors
        .iter()
        .filter(|(_, v)| norm(v) > 0.0)
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            (id.clone(), dot / (norm(v) * qn))
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out.truncate(k);
    Ok(out)
}

/// Dense-matrix power iteration on the Google matrix. Self-loops are
/// ignored; dangling nodes spread uniformly.
pub fn oracle_pagerank(n: usize, edges: &[(usize, usize, f64)], damping: f64) -> Result<Vec<f64>, OracleError> {
    if n == 0 {
        return Err(OracleError::Empty);
    }
    cap(n, 2_000)?;
    let mut w = vec![vec![0.0; n]; n];
    for &(s, t, x) in edges {
        if s != t {
            w[s][t] += x;
        }
    }
    let nf = n as f64;
    // g[t][s]: probability of stepping s -> t
    let mut g = vec![vec![0.0; n]; n];
    for s in 0..n {
        let out: f64 = w[s].iter().sum();
        for t in 0..n {
            let follow = if out > 0.0 { w[s][t] / out } else { 1.0 / nf };
            g[t][s] = damping * follow + (1.0 - damping) / nf;
        }
    }
    let mut r = vec![1.0 / nf; n];
    for _ in 0..100_000 {
        let next: Vec<f64> = (0..n).map(|t| (0..n).map(|s| g[t][s] * r[s]).sum()).collect();
        let delta: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if delta < 1e-14 {
            break;
        }
    }
    let total: f64 = r.iter().sum();
    Ok(r.into_iter().map(|x| x / total).collect())
}

/// Modularity of `labels` on `A = W + Wᵀ`.
pub fn oracle_modularity_of(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(s, t, x) in edges {
        a[s][t] += x;
        a[t][s] += x;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Best modularity over every set partition (restricted growth strings).
pub fn oracle_modularity(n: usize, edges: &[(usize, usize, f64)]) -> Result<(f64, Vec<usize>), OracleError> {
    if n == 0 {
        return Err(OracleError::Empty);
    }
    cap(n, MAX_MODULARITY_NODES)?;
    let mut labels = vec![0usize; n];
    let mut best = (f64::NEG_INFINITY, labels.clone());
    loop {
        let q = oracle_modularity_of(n, edges, &labels);
        if q > best.0 {
            best = (q, labels.clone());
        }
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(best);
            }
            let max_prefix = labels[..i].iter().copied().max().unwrap_or(0);
            if labels[i] <= max_prefix {
                labels[i] += 1;
                for l in labels.iter_mut().skip(i + 1) {
                    *l = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Scans every lag in `[-max_lag, max_lag]`, pairing `a` at day `t - lag`
/// with `b` at day `t`. Lags with fewer than 3 pairs or a constant side are
/// skipped. Ties (within 1e-12) prefer the smaller |lag|, then the
/// negative lag.
pub fn oracle_lag_scan(
    a: &BTreeMap<NaiveDate, f64>,
    b: &BTreeMap<NaiveDate, f64>,
    max_lag: i64,
) -> Option<(i64, f64)> {
    let mut scores: HashMap<i64, f64> = HashMap::new();
    for lag in -max_lag..=max_lag {
        let pairs: Vec<(f64, f64)> = b
            .iter()
            .filter_map(|(t, y)| a.get(&(*t - chrono::Duration::days(lag))).map(|x| (*x, *y)))
            .collect();
        if pairs.len() < 3 {
            continue;
        }
        let m = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        if vx == 0.0 || vy == 0.0 {
            continue;
        }
        scores.insert(lag, cov / (vx * vy).sqrt());
    }
    let top = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut near: Vec<i64> = scores.iter().filter(|(_, r)| top - **r <= 1e-12).map(|(l, _)| *l).collect();
    near.sort_by_key(|l| (l.abs(), *l));
    near.first().map(|l| (*l, scores[l]))
}

/// Relative change of the mean between two samples, in percent.
pub fn oracle_mean_change(before: &[f64], after: &[f64]) -> Option<f64> {
    if before.is_empty() || after.is_empty() {
        return None;
    }
    let ma = before.iter().sum::<f64>() / before.len() as f64;
    let mb = after.iter().sum::<f64>() / after.len() as f64;
    (ma != 0.0).then(|| (mb - ma) / ma * 100.0)
}

/// Hand evaluation of reciprocal rank fusion for the given ranked lists.
pub fn oracle_rrf(lists: &[Vec<String>], c: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for list in lists {
        for (i, id) in list.iter().enumerate() {
            *out.entry(id.clone()).or_insert(0.0) += 1.0 / (c + (i + 1) as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, day).unwrap()
    }

    #[test]
    fn coverage_gap() {
        assert_eq!(oracle_coverage((d(1), d(11)), &[(d(1), d(5)), (d(8), d(11))]), vec![(d(5), d(8))]);
        assert_eq!(oracle_coverage((d(1), d(3)), &[]), vec![(d(1), d(3))]);
    }

    #[test]
    fn pagerank_two_cycle() {
        let r = oracle_pagerank(2, &[(0, 1, 1.0), (1, 0, 1.0)], 0.85).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn modularity_two_triangles() {
        let e = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0), (2, 3, 1.0)];
        let (q, labels) = oracle_modularity(6, &e).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 1, 1, 1]);
        assert!((q - 5.0 / 14.0).abs() < 1e-12);
        assert!(oracle_modularity(13, &e).is_err());
    }

    #[test]
    fn knn_is_stable() {
        let v: Vec<(String, Vec<f32>)> = (0..100).map(|i| (format!("v{i:03}"), vec![(i % 7) as f32, (i % 5) as f32 - 2.0])).collect();
        let a = oracle_knn(&v, &[1.0, 0.5], 10).unwrap();
        assert_eq!(a, oracle_knn(&v, &[1.0, 0.5], 10).unwrap());
        assert_eq!(a.len(), 10);
    }

    #[test]
    fn lag_scan_shift() {
        let xs = [0.0, 4.0, 1.0, 7.0, 2.0, 9.0, 3.0, 3.0, 8.0, 1.0];
        let a: BTreeMap<_, _> = xs.iter().enumerate().map(|(i, x)| (d(1 + i as u32), *x)).collect();
        let b: BTreeMap<_, _> = xs.iter().enumerate().map(|(i, x)| (d(4 + i as u32), *x)).collect();
        assert_eq!(oracle_lag_scan(&a, &b, 5).unwrap().0, 3);
    }
}
