//! Modularity on the weight-symmetrized graph and greedy agglomerative
//! community detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnalysisError, InteractionGraph};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: BTreeMap<String, usize>,
}

impl Partition {
    pub fn from_labels<S: AsRef<str>>(pairs: &[(S, usize)]) -> Self {
        Self { labels: pairs.iter().map(|(n, l)| (n.as_ref().to_string(), *l)).collect() }
    }

    pub fn community_count(&self) -> usize {
        let mut ls: Vec<usize> = self.labels.values().copied().collect();
        ls.sort_unstable();
        ls.dedup();
        ls.len()
    }

    pub fn communities(&self) -> BTreeMap<usize, Vec<String>> {
        let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (n, l) in &self.labels {
            out.entry(*l).or_default().push(n.clone());
        }
        out
    }
}

/// `A = W + Wᵀ` as sparse rows, plus degrees and `2m`.
struct Sym {
    rows: Vec<BTreeMap<usize, f64>>,
    k: Vec<f64>,
    two_m: f64,
}

impl Sym {
    fn new(g: &InteractionGraph) -> Self {
        let n = g.len();
        let mut rows = vec![BTreeMap::new(); n];
        for (s, d, w) in g.edges() {
            *rows[s].entry(d).or_insert(0.0) += w;
            *rows[d].entry(s).or_insert(0.0) += w;
        }
        let k: Vec<f64> = rows.iter().map(|r| r.values().sum()).collect();
        let two_m = k.iter().sum();
        Self { rows, k, two_m }
    }

    fn q(&self, comm: &[usize]) -> f64 {
        let mut inside: BTreeMap<usize, f64> = BTreeMap::new();
        let mut tot: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            *tot.entry(comm[i]).or_default() += self.k[i];
            for (j, a) in row {
                if comm[*j] == comm[i] {
                    *inside.entry(comm[i]).or_default() += a;
                }
            }
        }
        tot.iter()
            .map(|(c, t)| inside.get(c).copied().unwrap_or(0.0) / self.two_m - (t / self.two_m).powi(2))
            .sum()
    }
}

fn labels_for(g: &InteractionGraph, p: &Partition) -> Result<Vec<usize>, AnalysisError> {
    g.nodes()
        .iter()
        .map(|n| p.labels.get(n).copied().ok_or_else(|| AnalysisError::UnlabeledNode(n.clone())))
        .collect()
}

/// Newman modularity of `p` on the undirected graph `W + Wᵀ`.
pub fn modularity(g: &InteractionGraph, p: &Partition) -> Result<f64, AnalysisError> {
    let sym = Sym::new(g);
    if sym.two_m <= 0.0 {
        return Err(AnalysisError::ZeroWeight);
    }
    Ok(sym.q(&labels_for(g, p)?))
}

const EPS: f64 = 1e-12;

/// Greedy merging while modularity rises (ties to the smallest label pair),
/// then single-node moves until no move helps. Labels are renumbered by
/// each community's first node.
pub fn detect_communities(g: &InteractionGraph) -> Partition {
    let n = g.len();
    let sym = Sym::new(g);
    let mut comm: Vec<usize> = (0..n).collect();
    if sym.two_m > 0.0 {
        merge_phase(&sym, &mut comm);
        move_phase(&sym, &mut comm);
    }
    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for (i, name) in g.nodes().iter().enumerate() {
        let next = renumber.len();
        let l = *renumber.entry(comm[i]).or_insert(next);
        labels.insert(name.clone(), l);
    }
    Partition { labels }
}

fn merge_phase(sym: &Sym, comm: &mut [usize]) {
    let n = comm.len();
    let two_m = sym.two_m;
    // e[a][b]: fraction of edge ends between communities a != b (one direction)
    let mut e: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (i, row) in sym.rows.iter().enumerate() {
        for (j, a) in row {
            if *j != i {
                *e[i].entry(*j).or_insert(0.0) += a / two_m;
            }
        }
    }
    let mut a: Vec<f64> = sym.k.iter().map(|k| k / two_m).collect();
    let mut alive = vec![true; n];
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for x in (0..n).filter(|x| alive[*x]) {
            for (&y, &exy) in e[x].range(x + 1..) {
                let dq = 2.0 * (exy - a[x] * a[y]);
                let better = match best {
                    None => dq > EPS,
                    Some((b, _, _)) => dq > b + EPS,
                };
                if better {
                    best = Some((dq, x, y));
                }
            }
        }
        let Some((_, x, y)) = best else { break };
        // fold y into x
        let ey = std::mem::take(&mut e[y]);
        for (z, w) in ey {
            if z == x {
                continue;
            }
            *e[x].entry(z).or_insert(0.0) += w;
            let ez = &mut e[z];
            ez.remove(&y);
            *ez.entry(x).or_insert(0.0) += w;
        }
        e[x].remove(&y);
        a[x] += a[y];
        a[y] = 0.0;
        alive[y] = false;
        for c in comm.iter_mut() {
            if *c == y {
                *c = x;
            }
        }
    }
}

fn move_phase(sym: &Sym, comm: &mut [usize]) {
    let n = comm.len();
    let m = sym.two_m / 2.0;
    let mut tot = vec![0f64; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot[comm[i]] += sym.k[i];
        size[comm[i]] += 1;
    }
    for _ in 0..100 {
        let mut moved = false;
        for i in 0..n {
            let ki = sym.k[i];
            if ki == 0.0 {
                continue;
            }
            let own = comm[i];
            let mut k_to: BTreeMap<usize, f64> = BTreeMap::new();
            for (j, a) in &sym.rows[i] {
                if *j != i {
                    *k_to.entry(comm[*j]).or_default() += a;
                }
            }
            let k_own = k_to.get(&own).copied().unwrap_or(0.0);
            let tot_own = tot[own] - ki;
            let gain = |k_b: f64, tot_b: f64| (k_b - k_own) / m - ki * (tot_b - tot_own) / (2.0 * m * m);
            let mut best: Option<(f64, usize)> = None;
            for (&c, &k_b) in &k_to {
                if c == own {
                    continue;
                }
                let g = gain(k_b, tot[c]);
                if g > EPS && best.is_none_or(|(bg, _)| g > bg + EPS) {
                    best = Some((g, c));
                }
            }
            // moving to an empty community
            if let Some(empty) = (0..n).find(|c| size[*c] == 0) {
                let g = gain(0.0, 0.0);
                if g > EPS && best.is_none_or(|(bg, _)| g > bg + EPS) {
                    best = Some((g, empty));
                }
            }
            if let Some((_, c)) = best {
                tot[own] -= ki;
                tot[c] += ki;
                size[own] -= 1;
                size[c] += 1;
                comm[i] = c;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}
