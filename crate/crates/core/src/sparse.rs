//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! score(d) = Σ_t IDF(t) · tf(t,d)·(k1+1) / (tf(t,d) + k1·(1 − b + b·|d|/avgdl))
//! IDF(t)   = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! The query is treated as a set of terms. The `ln(1 + ·)` IDF keeps every
//! score nonnegative, so documents sharing no term with the query are left
//! out of the ranking rather than scored zero.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::ranking::{Ranking, Stage};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("cannot build an index from zero documents")]
    Empty,
    #[error("duplicate doc_id '{0}'")]
    DuplicateDoc(String),
    #[error("k must be at least 1")]
    ZeroK,
}

/// Lowercased Unicode word segmentation (UAX #29). No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
}

impl InvertedIndex {
    pub fn build<I, S, T>(docs: I) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (id, text) in docs {
            let id = id.into();
            if !seen.insert(id.clone()) {
                return Err(SparseError::DuplicateDoc(id));
            }
            let doc = doc_ids.len() as u32;
            let tokens = tokenize(text.as_ref());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { doc, tf: count });
            }
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(id);
        }
        if doc_ids.is_empty() {
            return Err(SparseError::Empty);
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            postings,
            doc_ids,
            doc_lengths,
            avg_doc_length,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|i| self.doc_lengths[i])
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    pub fn search(
        &self,
        query_id: &str,
        query: &str,
        k: usize,
        params: Bm25Params,
    ) -> Result<Ranking, SparseError> {
        if k == 0 {
            return Err(SparseError::ZeroK);
        }
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let tf = p.tf as f64;
                let len = self.doc_lengths[p.doc as usize] as f64;
                let norm = if self.avg_doc_length > 0.0 {
                    len / self.avg_doc_length
                } else {
                    0.0
                };
                let denom = tf + params.k1 * (1.0 - params.b + params.b * norm);
                *scores.entry(p.doc).or_insert(0.0) += idf * tf * (params.k1 + 1.0) / denom;
            }
        }
        let ranking = Ranking::from_scores(
            query_id,
            Stage::Sparse,
            scores
                .into_iter()
                .filter(|(_, s)| *s > 0.0)
                .map(|(d, s)| (self.doc_ids[d as usize].clone(), s)),
        )
        .expect("doc ids are unique");
        Ok(ranking.truncated(k))
    }
}
