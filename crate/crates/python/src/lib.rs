//! Python bindings: embedding search, BM25, fusion, evaluation and the
//! rerank prompt/parse helpers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use claimrank::corpus::load_corpus as load_corpus_files;
use claimrank::eval::{evaluate as evaluate_rankings, GoldStandard};
use claimrank::fusion::{rrf_fuse as fuse, RrfConfig};
use claimrank::llm::{self, RerankRequest};
use claimrank::ranking::{RankedDoc, Ranking, Stage};
use claimrank::sparse::{self, Bm25Params};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pairs(r: &Ranking) -> Vec<(String, f64)> {
    r.entries()
        .iter()
        .map(|e| (e.doc_id.clone(), e.score))
        .collect()
}

/// Ranking over ids in the given order with descending placeholder scores.
fn ranking_from_ids(query_id: &str, ids: &[String]) -> PyResult<Ranking> {
    let n = ids.len() as f64;
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, id)| RankedDoc {
            doc_id: id.clone(),
            score: n - i as f64,
        })
        .collect();
    Ranking::new(query_id, Stage::Dense, entries).map_err(value_err)
}

/// Exact cosine top-k over unit-normalized vectors.
#[pyclass(frozen)]
struct EmbeddingStore {
    inner: claimrank::EmbeddingStore,
}

#[pymethods]
impl EmbeddingStore {
    #[new]
    fn new(records: Vec<(String, Vec<f64>)>) -> PyResult<Self> {
        let inner = claimrank::EmbeddingStore::from_vectors(records).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Reads a JSONL file of `{"id": ..., "vec": [...]}` records.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = claimrank::EmbeddingStore::load(&path).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    /// The stored unit-normalized vector.
    fn vector(&self, id: &str) -> PyResult<Vec<f32>> {
        self.inner
            .vector(id)
            .map(<[f32]>::to_vec)
            .ok_or_else(|| PyKeyError::new_err(id.to_string()))
    }

    #[pyo3(signature = (query, k, query_id = "q"))]
    fn search(&self, query: Vec<f32>, k: usize, query_id: &str) -> PyResult<Vec<(String, f64)>> {
        let r = self.inner.search(query_id, &query, k).map_err(value_err)?;
        Ok(pairs(&r))
    }

    fn similarity(&self, query: Vec<f32>, id: &str) -> PyResult<f64> {
        self.inner
            .similarity(&query, id)
            .map_err(value_err)?
            .ok_or_else(|| PyKeyError::new_err(id.to_string()))
    }
}

/// BM25 (Okapi) index over `(id, text)` documents.
#[pyclass(frozen)]
struct Bm25Index {
    inner: claimrank::InvertedIndex,
    params: Bm25Params,
}

#[pymethods]
impl Bm25Index {
    #[new]
    #[pyo3(signature = (docs, k1 = sparse::DEFAULT_K1, b = sparse::DEFAULT_B))]
    fn new(docs: Vec<(String, String)>, k1: f64, b: f64) -> PyResult<Self> {
        let inner = claimrank::InvertedIndex::build(docs).map_err(value_err)?;
        Ok(Self {
            inner,
            params: Bm25Params { k1, b },
        })
    }

    #[getter]
    fn doc_count(&self) -> usize {
        self.inner.doc_count()
    }

    fn idf(&self, term: &str) -> f64 {
        self.inner.idf(term)
    }

    fn search(&self, query: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let r = self
            .inner
            .search("q", query, k, self.params)
            .map_err(value_err)?;
        Ok(pairs(&r))
    }
}

/// Validated corpus loaded from the three JSONL files.
#[pyclass(frozen)]
struct Corpus {
    inner: claimrank::Corpus,
}

#[pymethods]
impl Corpus {
    /// `(posts, fact_checks, pairs)`.
    fn counts(&self) -> (usize, usize, usize) {
        self.inner.counts()
    }

    fn post_ids(&self) -> Vec<String> {
        self.inner.posts().iter().map(|p| p.id.clone()).collect()
    }

    fn fact_check_ids(&self) -> Vec<String> {
        self.inner.fact_checks().iter().map(|f| f.id.clone()).collect()
    }

    fn gold_for(&self, post_id: &str) -> Vec<String> {
        self.inner
            .gold_for(post_id)
            .map(|g| g.iter().cloned().collect())
            .unwrap_or_default()
    }
}

#[pyfunction]
fn load_corpus(posts: PathBuf, fact_checks: PathBuf, pairs: PathBuf) -> PyResult<Corpus> {
    let inner = load_corpus_files(&posts, &fact_checks, &pairs).map_err(value_err)?;
    Ok(Corpus { inner })
}

/// Fuses ranked id lists; returns `(id, score)` best first.
#[pyfunction]
#[pyo3(signature = (rankings, k_rrf = 60.0, weights = None))]
fn rrf_fuse(
    rankings: Vec<Vec<String>>,
    k_rrf: f64,
    weights: Option<Vec<f64>>,
) -> PyResult<Vec<(String, f64)>> {
    let built = rankings
        .iter()
        .map(|ids| ranking_from_ids("q", ids))
        .collect::<PyResult<Vec<_>>>()?;
    let refs: Vec<&Ranking> = built.iter().collect();
    let fused = fuse(&refs, &RrfConfig { k_rrf, weights }).map_err(value_err)?;
    Ok(pairs(&fused))
}

#[pyfunction]
fn success_at_k(ranked_ids: Vec<String>, gold: Vec<String>, k: usize) -> PyResult<bool> {
    let ranking = ranking_from_ids("q", &ranked_ids)?;
    let gold: BTreeSet<String> = gold.into_iter().collect();
    claimrank::eval::success_at_k(&ranking, &gold, k).map_err(value_err)
}

/// Per-language success@k and the macro average for `{post_id: [ids]}`.
#[pyfunction]
#[pyo3(signature = (corpus, rankings, k = 10))]
fn evaluate(
    corpus: &Corpus,
    rankings: HashMap<String, Vec<String>>,
    k: usize,
) -> PyResult<(BTreeMap<String, f64>, f64)> {
    let mut built = rankings
        .iter()
        .map(|(q, ids)| ranking_from_ids(q, ids))
        .collect::<PyResult<Vec<_>>>()?;
    built.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let gold = GoldStandard::from_corpus(&corpus.inner);
    let report = evaluate_rankings(&built, &gold, k, "python").map_err(value_err)?;
    Ok((report.per_language, report.macro_avg))
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    sparse::tokenize(text)
}

/// Returns `(ranked_ids, status)` with status one of clean/repaired/failed.
#[pyfunction]
fn parse_rerank_response(raw: &str, candidate_ids: Vec<String>) -> (Vec<String>, String) {
    let r = llm::parse_rerank_response(raw, &candidate_ids);
    let status = match r.parse_status {
        llm::ParseStatus::Clean => "clean",
        llm::ParseStatus::Repaired => "repaired",
        llm::ParseStatus::Failed => "failed",
    };
    (r.ranked_ids, status.to_string())
}

#[pyfunction]
fn build_translation_prompt(post_text: &str) -> String {
    llm::build_translation_prompt(post_text).render()
}

#[pyfunction]
#[pyo3(signature = (query, candidates, augmentation = None))]
fn build_rerank_prompt(
    query: &str,
    candidates: Vec<(String, String)>,
    augmentation: Option<String>,
) -> PyResult<String> {
    let req = RerankRequest::new(query, augmentation, candidates).map_err(value_err)?;
    Ok(llm::build_rerank_prompt(&req).render())
}

#[pymodule]
fn pyclaimrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<EmbeddingStore>()?;
    m.add_class::<Bm25Index>()?;
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(rrf_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(success_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(parse_rerank_response, m)?)?;
    m.add_function(wrap_pyfunction!(build_translation_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(build_rerank_prompt, m)?)?;
    Ok(())
}
