//! Lexical and semantic search over unified posts.
//!
//! One unified index spans all platforms; each platform also gets its own
//! index holding the native text fields. Vectors live alongside. All three
//! sit behind one lock so an upsert is never half-visible.

pub mod embed;
pub mod lexical;
pub mod segment;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::normalize::UnifiedPost;
use crate::platform::{MainType, Platform};

pub use embed::{cosine, Embedder, HashingEmbedder, EMBED_DIM};
pub use lexical::{Bm25Params, LexicalIndex};

pub const RRF_K: f64 = 60.0;

/// Unicode word segmentation, lowercased. Accents are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("k must be positive")]
    BadK,
    #[error("query vector has dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("query needs text or a vector")]
    EmptyQuery,
    #[error("segment error: {0}")]
    Segment(String),
}

/// What filters are evaluated against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub post_id: String,
    pub platform: Platform,
    pub seed_id: String,
    pub handle: String,
    pub main_type: MainType,
    pub sub_type: Option<String>,
    pub federal_party: Option<String>,
    pub province: Option<String>,
    pub tags: BTreeSet<String>,
    pub published_at: DateTime<Utc>,
}

impl From<&UnifiedPost> for DocMeta {
    fn from(p: &UnifiedPost) -> Self {
        Self {
            post_id: p.post_id.clone(),
            platform: p.platform,
            seed_id: p.seed_id.clone(),
            handle: p.handle.clone(),
            main_type: p.seed_meta.main_type,
            sub_type: p.seed_meta.sub_type.clone(),
            federal_party: p.seed_meta.federal_party.clone(),
            province: p.seed_meta.province.clone(),
            tags: p.seed_meta.collection_tags.clone(),
            published_at: p.published_at,
        }
    }
}

/// Hard predicates. Every set field must match; the time window is
/// half-open `[from, to)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Filters {
    pub platform: Option<Platform>,
    pub seed_id: Option<String>,
    pub main_type: Option<MainType>,
    pub sub_type: Option<String>,
    pub federal_party: Option<String>,
    pub province: Option<String>,
    pub tag: Option<String>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        *self == Filters::default()
    }

    pub fn matches(&self, m: &DocMeta) -> bool {
        fn eq_ci(want: &Option<String>, have: &Option<String>) -> bool {
            match want {
                None => true,
                Some(w) => have.as_deref().is_some_and(|h| h.eq_ignore_ascii_case(w)),
            }
        }
        self.platform.is_none_or(|p| p == m.platform)
            && self.seed_id.as_ref().is_none_or(|s| *s == m.seed_id)
            && self.main_type.is_none_or(|t| t == m.main_type)
            && eq_ci(&self.sub_type, &m.sub_type)
            && eq_ci(&self.federal_party, &m.federal_party)
            && eq_ci(&self.province, &m.province)
            && self.tag.as_ref().is_none_or(|t| m.tags.contains(t))
            && self.from.is_none_or(|f| m.published_at >= f)
            && self.to.is_none_or(|t| m.published_at < t)
    }

    pub fn matches_post(&self, p: &UnifiedPost) -> bool {
        self.matches(&DocMeta::from(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub post_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    LexicalOnly,
    SemanticOnly,
    #[default]
    Rrf,
    /// Filters only; newest first.
    Browse,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridQuery {
    pub text: Option<String>,
    pub vector: Option<Vec<f32>>,
    #[serde(default)]
    pub filters: Filters,
    pub k: usize,
    #[serde(default)]
    pub fusion: Fusion,
}

/// Sorts by descending score, ascending post id, and truncates to `k`.
pub(crate) fn rank(mut hits: Vec<SearchHit>, k: usize) -> Vec<SearchHit> {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.post_id.cmp(&b.post_id)));
    hits.truncate(k);
    hits
}

/// Reciprocal rank fusion over ranked lists; ranks start at 1.
pub fn rrf_fuse(lists: &[Vec<SearchHit>], k: usize) -> Vec<SearchHit> {
    let mut scores: HashMap<&str, f64> = HashMap::new();
    for list in lists {
        for (i, hit) in list.iter().enumerate() {
            *scores.entry(hit.post_id.as_str()).or_default() += 1.0 / (RRF_K + (i + 1) as f64);
        }
    }
    rank(scores.into_iter().map(|(id, score)| SearchHit { post_id: id.to_string(), score }).collect(), k)
}

#[derive(Default)]
struct State {
    unified: LexicalIndex,
    platforms: BTreeMap<Platform, LexicalIndex>,
    vectors: HashMap<String, Vec<f32>>,
}

/// Unified plus per-platform lexical indices and the vector store.
pub struct SearchIndex {
    state: RwLock<State>,
    embedder: Arc<dyn Embedder>,
    params: Bm25Params,
}

impl Default for SearchIndex {
    fn default() -> Self {
        Self::new(Arc::new(HashingEmbedder::default()))
    }
}

impl SearchIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self { state: RwLock::new(State::default()), embedder, params: Bm25Params::default() }
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        self.embedder.embed(text)
    }

    /// Upserts a post. `native_fields` are the platform's own text fields;
    /// when absent the platform index gets the unified text under `text`.
    pub fn index_post(&self, post: &UnifiedPost, native_fields: Option<BTreeMap<String, String>>) {
        let vector = self.embedder.embed(&post.text);
        let mut st = self.state.write();
        Self::apply(&mut st, post, native_fields, vector);
    }

    /// Upserts many posts under a single write lock. Embeddings are
    /// computed before the lock is taken.
    pub fn index_batch(&self, items: Vec<(UnifiedPost, Option<BTreeMap<String, String>>)>) {
        use rayon::prelude::*;
        let vectors: Vec<Vec<f32>> = items.par_iter().map(|(p, _)| self.embedder.embed(&p.text)).collect();
        let mut st = self.state.write();
        for ((post, fields), vector) in items.into_iter().zip(vectors) {
            Self::apply(&mut st, &post, fields, vector);
        }
    }

    fn apply(st: &mut State, post: &UnifiedPost, native_fields: Option<BTreeMap<String, String>>, vector: Vec<f32>) {
        let meta = DocMeta::from(post);
        let unified_fields = BTreeMap::from([("text".to_string(), post.text.clone())]);
        st.unified.upsert(meta.clone(), unified_fields.clone());
        // a post id belongs to exactly one platform, but be safe on replays
        for (p, idx) in st.platforms.iter_mut() {
            if *p != post.platform {
                idx.remove(&post.post_id);
            }
        }
        st.platforms.entry(post.platform).or_default().upsert(meta, native_fields.unwrap_or(unified_fields));
        st.vectors.insert(post.post_id.clone(), vector);
    }

    pub fn remove(&self, post_id: &str) -> bool {
        let mut st = self.state.write();
        let found = st.unified.remove(post_id);
        for idx in st.platforms.values_mut() {
            idx.remove(post_id);
        }
        st.vectors.remove(post_id);
        found
    }

    pub fn clear(&self) {
        *self.state.write() = State::default();
    }

    pub fn len(&self) -> usize {
        self.state.read().unified.doc_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.state.read().unified.contains(post_id)
    }

    pub fn platform_count(&self, platform: Platform) -> usize {
        self.state.read().platforms.get(&platform).map_or(0, LexicalIndex::doc_count)
    }

    pub fn platform_fields(&self, platform: Platform, post_id: &str) -> Option<BTreeMap<String, String>> {
        self.state.read().platforms.get(&platform)?.fields(post_id).cloned()
    }

    pub fn vector(&self, post_id: &str) -> Option<Vec<f32>> {
        self.state.read().vectors.get(post_id).cloned()
    }

    /// All non-null vectors whose documents pass `filters`, by post id.
    pub fn vectors_where(&self, filters: &Filters) -> Vec<(String, Vec<f32>)> {
        let st = self.state.read();
        let mut out: Vec<(String, Vec<f32>)> = st
            .vectors
            .iter()
            .filter(|(id, v)| !embed::is_null(v) && st.unified.meta(id).is_some_and(|m| filters.matches(m)))
            .map(|(id, v)| (id.clone(), v.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn meta(&self, post_id: &str) -> Option<DocMeta> {
        self.state.read().unified.meta(post_id).cloned()
    }

    /// Checks that every unified document sits in exactly one platform
    /// index, and per-platform counts agree.
    pub fn consistency_check(&self) -> Result<(), String> {
        let st = self.state.read();
        let mut expected: BTreeMap<Platform, usize> = BTreeMap::new();
        for m in st.unified.metas() {
            *expected.entry(m.platform).or_default() += 1;
            let homes = st.platforms.iter().filter(|(_, idx)| idx.contains(&m.post_id)).count();
            if homes != 1 {
                return Err(format!("{} is in {homes} platform indices", m.post_id));
            }
            if !st.platforms.get(&m.platform).is_some_and(|i| i.contains(&m.post_id)) {
                return Err(format!("{} is in the wrong platform index", m.post_id));
            }
        }
        for (p, idx) in &st.platforms {
            if idx.doc_count() != expected.get(p).copied().unwrap_or(0) {
                return Err(format!("{p}: platform index has {} docs, unified has {}", idx.doc_count(), expected.get(p).copied().unwrap_or(0)));
            }
        }
        if st.vectors.len() != st.unified.doc_count() {
            return Err("vector store and unified index disagree".into());
        }
        Ok(())
    }

    pub fn search_lexical(&self, query: &str, filters: &Filters, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::BadK);
        }
        Ok(self.state.read().unified.search(query, filters, k, &self.params))
    }

    /// Lexical search restricted to one platform's native-field index.
    pub fn search_platform(&self, platform: Platform, query: &str, filters: &Filters, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::BadK);
        }
        let st = self.state.read();
        Ok(st.platforms.get(&platform).map(|i| i.search(query, filters, k, &self.params)).unwrap_or_default())
    }

    pub fn search_semantic(&self, query: &[f32], filters: &Filters, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::BadK);
        }
        if query.len() != self.dim() {
            return Err(IndexError::Dimension { got: query.len(), expected: self.dim() });
        }
        if embed::is_null(query) {
            return Ok(Vec::new());
        }
        let st = self.state.read();
        let hits = st
            .vectors
            .iter()
            .filter(|(id, v)| !embed::is_null(v) && st.unified.meta(id).is_some_and(|m| filters.matches(m)))
            .map(|(id, v)| SearchHit { post_id: id.clone(), score: cosine(query, v) })
            .collect();
        Ok(rank(hits, k))
    }

    pub fn browse(&self, filters: &Filters, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::BadK);
        }
        let st = self.state.read();
        let mut metas: Vec<&DocMeta> = st.unified.metas().filter(|m| filters.matches(m)).collect();
        metas.sort_by(|a, b| b.published_at.cmp(&a.published_at).then_with(|| a.post_id.cmp(&b.post_id)));
        Ok(metas.into_iter().take(k).map(|m| SearchHit { post_id: m.post_id.clone(), score: 0.0 }).collect())
    }

    pub fn search_hybrid(&self, q: &HybridQuery) -> Result<Vec<SearchHit>, IndexError> {
        if q.k == 0 {
            return Err(IndexError::BadK);
        }
        let text = q.text.as_deref().filter(|t| !t.trim().is_empty());
        let vector = || -> Option<Vec<f32>> { q.vector.clone().or_else(|| text.map(|t| self.embed(t))) };
        match q.fusion {
            Fusion::Browse => self.browse(&q.filters, q.k),
            Fusion::LexicalOnly => self.search_lexical(text.ok_or(IndexError::EmptyQuery)?, &q.filters, q.k),
            Fusion::SemanticOnly => self.search_semantic(&vector().ok_or(IndexError::EmptyQuery)?, &q.filters, q.k),
            Fusion::Rrf => {
                if text.is_none() && q.vector.is_none() {
                    return Err(IndexError::EmptyQuery);
                }
                let mut lists = Vec::new();
                if let Some(t) = text {
                    lists.push(self.search_lexical(t, &q.filters, q.k)?);
                }
                if let Some(v) = vector() {
                    lists.push(self.search_semantic(&v, &q.filters, q.k)?);
                }
                Ok(rrf_fuse(&lists, q.k))
            }
        }
    }

    /// Writes the lexical and vector segments into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        let st = self.state.read();
        let mut docs: Vec<segment::DocRecord> = Vec::with_capacity(st.unified.doc_count());
        for m in st.unified.metas() {
            let fields = st
                .platforms
                .get(&m.platform)
                .and_then(|i| i.fields(&m.post_id))
                .cloned()
                .unwrap_or_default();
            let text = st.unified.fields(&m.post_id).and_then(|f| f.get("text")).cloned().unwrap_or_default();
            docs.push(segment::DocRecord { meta: m.clone(), text, native_fields: fields });
        }
        docs.sort_by(|a, b| a.meta.post_id.cmp(&b.meta.post_id));
        let mut vectors: Vec<(&String, &Vec<f32>)> = st.vectors.iter().collect();
        vectors.sort_by(|a, b| a.0.cmp(b.0));
        segment::write(dir, self.dim(), &docs, &vectors).map_err(|e| IndexError::Segment(e.to_string()))
    }

    /// Loads segments written by [`save`](Self::save). Postings are rebuilt
    /// from the stored text.
    pub fn load(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, IndexError> {
        let (dim, docs, vectors) = segment::read(dir).map_err(|e| IndexError::Segment(e.to_string()))?;
        if dim != embedder.dim() {
            return Err(IndexError::Dimension { got: dim, expected: embedder.dim() });
        }
        let index = Self::new(embedder);
        {
            let mut st = index.state.write();
            for d in docs {
                st.unified.upsert(d.meta.clone(), BTreeMap::from([("text".to_string(), d.text)]));
                st.platforms.entry(d.meta.platform).or_default().upsert(d.meta, d.native_fields);
            }
            st.vectors = vectors.into_iter().collect();
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_keeps_accents() {
        assert_eq!(tokenize("Élections fédérales 2025"), vec!["élections", "fédérales", "2025"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("@Someone: hello, World!"), vec!["someone", "hello", "world"]);
    }

    #[test]
    fn rrf_hand_value() {
        let hit = |id: &str| SearchHit { post_id: id.into(), score: 0.0 };
        let lexical = vec![hit("a"), hit("b"), hit("c")];
        let semantic = vec![hit("b"), hit("c"), hit("a")];
        let fused = rrf_fuse(&[lexical, semantic], 10);
        let a = fused.iter().find(|h| h.post_id == "a").unwrap();
        assert!((a.score - (1.0 / 61.0 + 1.0 / 63.0)).abs() < 1e-12);
        assert!((a.score - 0.03227).abs() < 5e-6);
        let only = rrf_fuse(&[vec![hit("z")]], 10);
        assert_eq!(only[0].score, 1.0 / 61.0);
    }
}
