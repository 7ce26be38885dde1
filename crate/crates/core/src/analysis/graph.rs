use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::normalize::UnifiedPost;
use crate::seeds::SeedRegistry;

/// Directed weighted graph over named nodes. Nodes are kept sorted by name
/// so indices are stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    nodes: Vec<String>,
    edges: BTreeMap<(usize, usize), f64>,
}

impl InteractionGraph {
    pub fn from_edges<S: AsRef<str>>(nodes: &[S], edges: &[(S, S, f64)]) -> Result<Self, AnalysisError> {
        let mut names: Vec<String> = nodes.iter().map(|n| n.as_ref().to_string()).collect();
        for (s, d, _) in edges {
            names.push(s.as_ref().to_string());
            names.push(d.as_ref().to_string());
        }
        names.sort();
        names.dedup();
        let mut g = Self { nodes: names, edges: BTreeMap::new() };
        for (s, d, w) in edges {
            g.add_edge(s.as_ref(), d.as_ref(), *w)?;
        }
        Ok(g)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn add_node(&mut self, name: &str) -> usize {
        match self.nodes.binary_search_by(|n| n.as_str().cmp(name)) {
            Ok(i) => i,
            Err(i) => {
                self.nodes.insert(i, name.to_string());
                self.edges = std::mem::take(&mut self.edges)
                    .into_iter()
                    .map(|((s, d), w)| ((s + usize::from(s >= i), d + usize::from(d >= i)), w))
                    .collect();
                i
            }
        }
    }

    /// Adds `w` to the edge `src -> dst`, creating nodes as needed.
    pub fn add_edge(&mut self, src: &str, dst: &str, w: f64) -> Result<(), AnalysisError> {
        if !w.is_finite() || w < 0.0 {
            return Err(AnalysisError::BadWeight);
        }
        self.add_node(src);
        self.add_node(dst);
        let (s, d) = (self.index_of(src).expect("added"), self.index_of(dst).expect("added"));
        *self.edges.entry((s, d)).or_default() += w;
        Ok(())
    }

    /// Edges as `(src, dst, weight)` by index.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(s, d), &w)| (s, d, w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, src: &str, dst: &str) -> f64 {
        match (self.index_of(src), self.index_of(dst)) {
            (Some(s), Some(d)) => self.edges.get(&(s, d)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Tab-separated `src dst weight` lines. Isolated nodes are written as
    /// a single name.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let mut touched = vec![false; self.nodes.len()];
        for (s, d, w) in self.edges() {
            touched[s] = true;
            touched[d] = true;
            let _ = writeln!(out, "{}\t{}\t{}", self.nodes[s], self.nodes[d], w);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !touched[i] {
                let _ = writeln!(out, "{n}");
            }
        }
        out
    }

    /// Parses whitespace-separated `src dst [weight]` lines; `#` starts a
    /// comment. A missing weight counts as 1.
    pub fn parse_edge_list(text: &str) -> Result<Self, AnalysisError> {
        let mut g = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| AnalysisError::EdgeList { line: i + 1, reason: reason.to_string() };
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [n] => {
                    g.add_node(n);
                }
                [s, d] => g.add_edge(s, d, 1.0)?,
                [s, d, w] => {
                    let w: f64 = w.parse().map_err(|_| err("weight is not a number"))?;
                    g.add_edge(s, d, w).map_err(|_| err("weight must be finite and non-negative"))?;
                }
                _ => return Err(err("expected `src dst [weight]`")),
            }
        }
        Ok(g)
    }
}

/// Seed-level graph: an edge `a -> b` for every post by `a` mentioning or
/// sharing a handle that `b` holds on the same platform.
pub fn build_interaction_graph(posts: &[UnifiedPost], registry: &SeedRegistry) -> InteractionGraph {
    let mut g = InteractionGraph::default();
    let mut resolved: BTreeMap<(crate::platform::Platform, String), Option<String>> = BTreeMap::new();
    for p in posts {
        g.add_node(&p.seed_id);
        let targets = p.mentions.iter().chain(p.shared_from.iter());
        for handle in targets {
            let key = (p.platform, handle.to_lowercase());
            let target = resolved
                .entry(key)
                .or_insert_with(|| registry.find_by_handle(p.platform, handle).map(|e| e.id))
                .clone();
            if let Some(t) = target {
                g.add_edge(&p.seed_id, &t, 1.0).expect("unit weight is valid");
            }
        }
    }
    g
}
