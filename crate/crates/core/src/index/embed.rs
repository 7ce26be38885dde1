//! Text embeddings. The default embedder hashes token unigrams and bigrams
//! into signed buckets; any other model can be plugged in through
//! [`Embedder`].

use super::tokenize;

pub const EMBED_DIM: usize = 256;

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    /// Unit-norm vector, or all zeros for empty text.
    fn embed(&self, text: &str) -> Vec<f32>;
}

#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: EMBED_DIM }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }
}

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(0x100000001b3);
        }
        for b in part.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f32> {
        let tokens = tokenize(text);
        let mut acc = vec![0f64; self.dim];
        let mut add = |h: u64, w: f64| {
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[(h % self.dim as u64) as usize] += sign * w;
        };
        for t in &tokens {
            add(fnv1a(&[t]), 1.0);
        }
        for pair in tokens.windows(2) {
            add(fnv1a(&[&pair[0], &pair[1]]), 0.5);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; self.dim];
        }
        acc.iter().map(|x| (x / norm) as f32).collect()
    }
}

pub fn is_null(v: &[f32]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

/// Cosine similarity in f64; zero when either side is null.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
