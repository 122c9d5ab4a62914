//! Exact top-k cosine search over L2-normalized embeddings.
//!
//! Vectors live in one contiguous row-major `f32` buffer. Dot products are
//! accumulated in `f32`; the final ordering uses `f64` keys with the global
//! tie rule (score descending, doc id ascending), applied once per query.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::ranking::{entry_order, RankedDoc, Ranking, Stage};

#[derive(Debug, Error)]
pub enum DenseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed embedding line: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dimension mismatch: expected {expected}, found {found} (id '{id}')")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        id: String,
    },
    #[error("embedding '{id}' has zero norm")]
    ZeroNorm { id: String },
    #[error("embedding '{id}' contains a non-finite value")]
    NonFinite { id: String },
    #[error("duplicate embedding id '{id}'")]
    DuplicateId { id: String },
    #[error("embedding '{id}' is empty")]
    EmptyVector { id: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

#[derive(Deserialize)]
struct EmbeddingLine {
    id: String,
    vec: Vec<f64>,
}

/// Immutable set of unit-norm embeddings sharing one dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

/// Returns the unit-norm copy of `v` as `f32`.
fn normalize(id: &str, v: &[f64]) -> Result<Vec<f32>, DenseError> {
    if v.iter().any(|x| !x.is_finite() || !(*x as f32).is_finite()) {
        return Err(DenseError::NonFinite { id: id.to_string() });
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DenseError::ZeroNorm { id: id.to_string() });
    }
    Ok(v.iter().map(|x| (x / norm) as f32).collect())
}

impl EmbeddingStore {
    /// Builds a store from raw vectors, normalizing each one.
    pub fn from_vectors<I, S>(records: I) -> Result<Self, DenseError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut store = EmbeddingStore {
            dim: 0,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (id, v) in records {
            store.push(id.into(), &v)?;
        }
        Ok(store)
    }

    fn push(&mut self, id: String, v: &[f64]) -> Result<(), DenseError> {
        if v.is_empty() {
            return Err(DenseError::EmptyVector { id });
        }
        if self.ids.is_empty() {
            self.dim = v.len();
        } else if v.len() != self.dim {
            return Err(DenseError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
                id,
            });
        }
        let unit = normalize(&id, v)?;
        if self.index.contains_key(&id) {
            return Err(DenseError::DuplicateId { id });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&unit);
        Ok(())
    }

    /// Loads `{"id": ..., "vec": [...]}` lines.
    pub fn load(path: &Path) -> Result<Self, DenseError> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| DenseError::Io {
            path: name.clone(),
            source,
        })?;
        let mut store = EmbeddingStore::from_vectors(Vec::<(String, Vec<f64>)>::new())?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| DenseError::Io {
                path: name.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingLine =
                serde_json::from_str(&line).map_err(|source| DenseError::Parse {
                    path: name.clone(),
                    line: idx + 1,
                    source,
                })?;
            store.push(rec.id, &rec.vec)?;
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// The stored (unit-norm) vector of row `i`.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    fn check_query(&self, query: &[f32]) -> Result<(), DenseError> {
        if query.len() != self.dim {
            return Err(DenseError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
                id: "<query>".into(),
            });
        }
        Ok(())
    }

    /// Normalizes a raw query; zero or non-finite queries are rejected.
    pub fn prepare_query(&self, query: &[f32]) -> Result<Vec<f32>, DenseError> {
        self.check_query(query)?;
        let q: Vec<f64> = query.iter().map(|&x| x as f64).collect();
        normalize("<query>", &q)
    }

    /// Cosine similarity between a stored row and a unit query.
    #[inline]
    fn dot_row(&self, i: usize, unit_query: &[f32]) -> f32 {
        self.row(i)
            .iter()
            .zip(unit_query)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Cosine similarity of `query` against the stored vector `id`.
    pub fn similarity(&self, query: &[f32], id: &str) -> Result<Option<f64>, DenseError> {
        let q = self.prepare_query(query)?;
        Ok(self.position(id).map(|i| self.dot_row(i, &q) as f64))
    }

    /// Exact top-k over the whole store.
    pub fn search(
        &self,
        query_id: &str,
        query: &[f32],
        k: usize,
    ) -> Result<Ranking, DenseError> {
        self.search_within(query_id, query, k, None)
    }

    /// Exact top-k restricted to the given rows (all rows when `None`).
    pub fn search_within(
        &self,
        query_id: &str,
        query: &[f32],
        k: usize,
        rows: Option<&[usize]>,
    ) -> Result<Ranking, DenseError> {
        if k == 0 {
            return Err(DenseError::ZeroK);
        }
        let q = self.prepare_query(query)?;
        let mut scored: Vec<(usize, f64)> = match rows {
            Some(rows) => rows.iter().map(|&i| (i, self.dot_row(i, &q) as f64)).collect(),
            None => (0..self.len()).map(|i| (i, self.dot_row(i, &q) as f64)).collect(),
        };
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            entry_order(a.1, &self.ids[a.0], b.1, &self.ids[b.0])
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        let entries = scored
            .into_iter()
            .map(|(i, score)| RankedDoc {
                doc_id: self.ids[i].clone(),
                score,
            })
            .collect();
        Ok(Ranking::new(query_id, Stage::Dense, entries).expect("store ids are unique and sorted"))
    }

    /// Runs `search` for every query, preserving input order. `workers`
    /// bounds the thread pool; `None` uses the global rayon pool.
    pub fn batch_search(
        &self,
        queries: &[(String, Vec<f32>)],
        k: usize,
        workers: Option<usize>,
    ) -> Result<Vec<Ranking>, DenseError> {
        self.batch_search_within(queries, k, workers, |_| None)
    }

    /// Batch variant of [`search_within`](Self::search_within); `rows_for`
    /// maps a query id to its candidate rows.
    pub fn batch_search_within<'a, F>(
        &self,
        queries: &[(String, Vec<f32>)],
        k: usize,
        workers: Option<usize>,
        rows_for: F,
    ) -> Result<Vec<Ranking>, DenseError>
    where
        F: Fn(&str) -> Option<&'a [usize]> + Sync,
    {
        let run = || {
            queries
                .par_iter()
                .map(|(id, v)| self.search_within(id, v, k, rows_for(id)))
                .collect::<Result<Vec<_>, _>>()
        };
        match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| DenseError::Pool(e.to_string()))?
                .install(run),
            None => run(),
        }
    }
}

/// Per-query candidate rows, grouped by a label such as the language.
///
/// Queries whose group has no documents get an empty pool; queries that
/// were never registered search the whole store.
#[derive(Debug, Clone, Default)]
pub struct CandidatePools {
    group_of: HashMap<String, String>,
    rows: HashMap<String, Vec<usize>>,
}

impl CandidatePools {
    /// `docs` and `queries` are `(id, group)` pairs. Documents missing from
    /// `store` are ignored.
    pub fn by_group<'a, D, Q>(store: &EmbeddingStore, docs: D, queries: Q) -> Self
    where
        D: IntoIterator<Item = (&'a str, &'a str)>,
        Q: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut rows: HashMap<String, Vec<usize>> = HashMap::new();
        for (id, group) in docs {
            if let Some(i) = store.position(id) {
                rows.entry(group.to_string()).or_default().push(i);
            }
        }
        for r in rows.values_mut() {
            r.sort_unstable();
        }
        let group_of = queries
            .into_iter()
            .map(|(q, g)| (q.to_string(), g.to_string()))
            .collect();
        Self { group_of, rows }
    }

    pub fn rows_for(&self, query_id: &str) -> Option<&[usize]> {
        let group = self.group_of.get(query_id)?;
        Some(self.rows.get(group).map(Vec::as_slice).unwrap_or(&[]))
    }
}
