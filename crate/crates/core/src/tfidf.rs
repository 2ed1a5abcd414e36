//! TF-IDF vectors with raw term frequency, natural-log inverse document
//! frequency and cosine similarity.

use std::collections::HashMap;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    /// `(term id, weight)` sorted by term id; zero weights are dropped.
    entries: Vec<(usize, f64)>,
    norm_sq: f64,
}

impl SparseVector {
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
            }
        }
        sum
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        // sqrt(x * x) == x exactly, so identical vectors score exactly 1
        (self.dot(other) / (self.norm_sq * other.norm_sq).sqrt()).clamp(-1.0, 1.0)
    }
}

/// A fitted corpus: one TF-IDF vector per document.
#[derive(Debug, Clone)]
pub struct TfIdf {
    vectors: Vec<SparseVector>,
}

impl TfIdf {
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut vocab: HashMap<&str, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        let mut counts: Vec<HashMap<usize, usize>> = Vec::with_capacity(docs.len());
        for doc in docs {
            let mut tf: HashMap<usize, usize> = HashMap::new();
            for tok in doc {
                let next = vocab.len();
                let id = *vocab.entry(tok.as_ref()).or_insert(next);
                if id == df.len() {
                    df.push(0);
                }
                *tf.entry(id).or_default() += 1;
            }
            for id in tf.keys() {
                df[*id] += 1;
            }
            counts.push(tf);
        }
        let n = docs.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| (n / d as f64).ln()).collect();
        let vectors = counts
            .into_iter()
            .map(|tf| {
                let mut entries: Vec<(usize, f64)> = tf
                    .into_iter()
                    .map(|(id, c)| (id, c as f64 * idf[id]))
                    .filter(|(_, w)| *w != 0.0)
                    .collect();
                entries.sort_unstable_by_key(|e| e.0);
                let norm_sq = entries.iter().map(|(_, w)| w * w).sum();
                SparseVector { entries, norm_sq }
            })
            .collect();
        Self { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, doc: usize) -> &SparseVector {
        &self.vectors[doc]
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        self.vectors[a].cosine(&self.vectors[b])
    }
}
