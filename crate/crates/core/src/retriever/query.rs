//! Hashed bag-of-words query embedding.
//!
//! Each unigram and adjacent-word bigram of the lowercased query hashes to a
//! seed, and that seed expands into a dense ±1/√d sign vector. The embedding
//! is the L2-normalized sum. Bigrams keep some word order, which matters for
//! compositional queries such as "capital of country of x".

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{fnv1a64, fnv1a64_extend, rng_from_seed};

pub const DEFAULT_QUERY_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding(pub Vec<f64>);

impl QueryEmbedding {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl QueryEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "query embedding dimension must be positive");
        Self { dim, seed }
    }

    fn add_feature(&self, feature: &str, acc: &mut [f64]) {
        let h = fnv1a64_extend(fnv1a64(&self.seed.to_le_bytes()), feature.as_bytes());
        let mut rng = rng_from_seed(h);
        let scale = 1.0 / (self.dim as f64).sqrt();
        for v in acc.iter_mut() {
            *v += if rng.random::<bool>() { scale } else { -scale };
        }
    }

    /// Embeds `query`. A query with no words maps to the zero vector.
    pub fn embed(&self, query: &str) -> QueryEmbedding {
        let lowered = query.to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric() && c != '.' && c != '-' && c != '_')
            .filter(|w| !w.is_empty())
            .collect();
        let mut acc = vec![0.0; self.dim];
        for w in &words {
            self.add_feature(&format!("u:{w}"), &mut acc);
        }
        for pair in words.windows(2) {
            self.add_feature(&format!("b:{} {}", pair[0], pair[1]), &mut acc);
        }
        let n = crate::tensor::norm(&acc);
        if n > 0.0 {
            acc.iter_mut().for_each(|v| *v /= n);
        }
        QueryEmbedding(acc)
    }
}

impl Default for QueryEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_QUERY_DIM, 0)
    }
}
