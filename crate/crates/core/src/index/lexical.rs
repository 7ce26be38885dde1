//! Inverted index with BM25 ranking.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{rank, tokenize, DocMeta, Filters, SearchHit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

pub fn term_score(tf: f64, doc_len: f64, avgdl: f64, idf: f64, p: &Bm25Params) -> f64 {
    let norm = if avgdl > 0.0 { doc_len / avgdl } else { 0.0 };
    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm))
}

#[derive(Debug, Clone)]
struct Doc {
    meta: DocMeta,
    fields: BTreeMap<String, String>,
    len: usize,
    terms: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LexicalIndex {
    /// token -> post_id -> positions. BTreeMap keeps posting lists sorted.
    postings: HashMap<String, BTreeMap<String, Vec<u32>>>,
    docs: HashMap<String, Doc>,
    total_len: u64,
}

impl LexicalIndex {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.docs.contains_key(post_id)
    }

    pub fn df(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, BTreeMap::len)
    }

    pub fn avgdl(&self) -> f64 {
        if self.docs.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.docs.len() as f64
        }
    }

    /// Posting list for a token: (post_id, tf, positions), sorted by post id.
    pub fn postings(&self, token: &str) -> Vec<(&str, usize, &[u32])> {
        self.postings
            .get(token)
            .map(|p| p.iter().map(|(id, pos)| (id.as_str(), pos.len(), pos.as_slice())).collect())
            .unwrap_or_default()
    }

    pub fn meta(&self, post_id: &str) -> Option<&DocMeta> {
        self.docs.get(post_id).map(|d| &d.meta)
    }

    pub fn metas(&self) -> impl Iterator<Item = &DocMeta> {
        self.docs.values().map(|d| &d.meta)
    }

    pub fn fields(&self, post_id: &str) -> Option<&BTreeMap<String, String>> {
        self.docs.get(post_id).map(|d| &d.fields)
    }

    pub fn upsert(&mut self, meta: DocMeta, fields: BTreeMap<String, String>) {
        self.remove(&meta.post_id);
        let tokens: Vec<String> = fields.values().flat_map(|v| tokenize(v)).collect();
        let mut positions: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            positions.entry(t.clone()).or_default().push(i as u32);
        }
        let id = meta.post_id.clone();
        let terms: Vec<String> = positions.keys().cloned().collect();
        for (t, pos) in positions {
            self.postings.entry(t).or_default().insert(id.clone(), pos);
        }
        self.total_len += tokens.len() as u64;
        self.docs.insert(id, Doc { meta, fields, len: tokens.len(), terms });
    }

    pub fn remove(&mut self, post_id: &str) -> bool {
        let Some(doc) = self.docs.remove(post_id) else { return false };
        for t in &doc.terms {
            if let Some(list) = self.postings.get_mut(t) {
                list.remove(post_id);
                if list.is_empty() {
                    self.postings.remove(t);
                }
            }
        }
        self.total_len -= doc.len as u64;
        true
    }

    /// BM25 over the distinct query tokens. Corpus statistics are those of
    /// the whole index; filters only decide which documents may be returned.
    pub fn search(&self, query: &str, filters: &Filters, k: usize, p: &Bm25Params) -> Vec<SearchHit> {
        let mut qtokens = tokenize(query);
        qtokens.sort();
        qtokens.dedup();
        let n = self.docs.len();
        let avgdl = self.avgdl();
        let mut scores: HashMap<&str, f64> = HashMap::new();
        for t in &qtokens {
            let Some(list) = self.postings.get(t) else { continue };
            let w = idf(n, list.len());
            for (id, pos) in list {
                let doc = &self.docs[id];
                if !filters.matches(&doc.meta) {
                    continue;
                }
                *scores.entry(id.as_str()).or_default() += term_score(pos.len() as f64, doc.len as f64, avgdl, w, p);
            }
        }
        rank(scores.into_iter().map(|(id, score)| SearchHit { post_id: id.to_string(), score }).collect(), k)
    }
}
