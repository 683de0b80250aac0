//! Okapi BM25 over a small in-memory corpus.
//!
//! Used for long-term memory retrieval, the text-similarity baseline and
//! neighbour selection for cold items. IDF uses the non-negative form
//! `ln(1 + (N - n + 0.5) / (n + 0.5))`.

use std::collections::HashMap;

use crate::text::tokenize;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    docs: Vec<HashMap<String, u32>>,
    lengths: Vec<usize>,
    avg_len: f64,
    doc_freq: HashMap<String, u32>,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        Self::with_params(docs, DEFAULT_K1, DEFAULT_B)
    }

    pub fn with_params<S: AsRef<str>>(docs: &[S], k1: f64, b: f64) -> Self {
        let mut tf_docs = Vec::with_capacity(docs.len());
        let mut lengths = Vec::with_capacity(docs.len());
        let mut doc_freq: HashMap<String, u32> = HashMap::new();
        for doc in docs {
            let tokens = tokenize(doc.as_ref());
            lengths.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for term in tf.keys() {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
            tf_docs.push(tf);
        }
        let total: usize = lengths.iter().sum();
        let avg_len = if lengths.is_empty() {
            0.0
        } else {
            total as f64 / lengths.len() as f64
        };
        Self {
            k1,
            b,
            docs: tf_docs,
            lengths,
            avg_len,
            doc_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score one document against a query. Repeated query terms count
    /// once per occurrence.
    pub fn score(&self, query: &str, doc: usize) -> f64 {
        self.score_tokens(&tokenize(query), doc)
    }

    fn score_tokens(&self, query: &[String], doc: usize) -> f64 {
        let tf = &self.docs[doc];
        if self.avg_len == 0.0 {
            return 0.0;
        }
        let norm = 1.0 - self.b + self.b * self.lengths[doc] as f64 / self.avg_len;
        query
            .iter()
            .filter_map(|term| tf.get(term).map(|&f| (term, f as f64)))
            .map(|(term, f)| self.idf(term) * f * (self.k1 + 1.0) / (f + self.k1 * norm))
            .sum()
    }

    pub fn score_all(&self, query: &str) -> Vec<f64> {
        let q = tokenize(query);
        (0..self.docs.len()).map(|d| self.score_tokens(&q, d)).collect()
    }

    /// Document indices sorted by descending score, ties by lower index.
    pub fn ranked(&self, query: &str) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = self.score_all(query).into_iter().enumerate().collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_scores_nothing() {
        let idx = Bm25Index::new::<&str>(&[]);
        assert!(idx.ranked("anything").is_empty());
    }

    #[test]
    fn metal_query_prefers_metal_entry() {
        let idx = Bm25Index::new(&["likes jazz piano", "likes heavy metal"]);
        let ranked = idx.ranked("metal guitar");
        assert_eq!(ranked[0].0, 1);
        assert!(ranked[0].1 > 0.0);
        assert_eq!(ranked[1].1, 0.0);
    }

    #[test]
    fn idf_is_non_negative_for_ubiquitous_terms() {
        let idx = Bm25Index::new(&["a b", "a c", "a d"]);
        assert!(idx.idf("a") > 0.0);
        assert!(idx.idf("b") > idx.idf("a"));
    }
}
