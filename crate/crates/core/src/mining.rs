//! Hard-negative mining for contrastive fine-tuning data.
//!
//! For every gold (post, fact-check) pair the retriever's top
//! `candidate_depth` list is scanned in rank order. Every gold fact-check of
//! the post is skipped (not only the paired one), candidates too close to
//! the positive's score are skipped when a margin is set, and the first
//! `negatives_per_query` survivors become the negatives, hardest first.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{Corpus, SelectText, TextSelector};
use crate::dense::{CandidatePools, EmbeddingStore};
use crate::ranking::Ranking;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    #[serde(default = "default_negatives")]
    pub negatives_per_query: usize,
    #[serde(default = "default_depth")]
    pub candidate_depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

fn default_negatives() -> usize {
    20
}
fn default_depth() -> usize {
    100
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            negatives_per_query: default_negatives(),
            candidate_depth: default_depth(),
            margin: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("invalid mining config: {0}")]
    Config(String),
    #[error("retrieval failed for post '{post_id}': {reason}")]
    Retrieval { post_id: String, reason: String },
    #[error("{0}")]
    Text(#[from] crate::corpus::EmptyTextError),
    #[error("i/o error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MiningError> {
        if self.negatives_per_query == 0 || self.negatives_per_query > self.candidate_depth {
            return Err(MiningError::Config(format!(
                "need 1 <= negatives_per_query ({}) <= candidate_depth ({})",
                self.negatives_per_query, self.candidate_depth
            )));
        }
        if let Some(m) = self.margin {
            if !m.is_finite() {
                return Err(MiningError::Config(format!("margin must be finite, got {m}")));
            }
        }
        Ok(())
    }
}

/// Source of candidate rankings for mining.
pub trait Retriever: Sync {
    fn retrieve(&self, post_id: &str, depth: usize) -> Result<Ranking, String>;
    /// Score of one (post, fact-check) pair, used for the margin filter.
    fn score(&self, post_id: &str, doc_id: &str) -> Option<f64>;
}

/// Dense retriever over a post-embedding store and a fact-check store.
pub struct DenseRetriever<'a> {
    pub queries: &'a EmbeddingStore,
    pub docs: &'a EmbeddingStore,
    /// Optional per-post candidate rows (same-language pools).
    pub pools: Option<&'a CandidatePools>,
}

impl Retriever for DenseRetriever<'_> {
    fn retrieve(&self, post_id: &str, depth: usize) -> Result<Ranking, String> {
        let q = self
            .queries
            .vector(post_id)
            .ok_or_else(|| format!("no embedding for post '{post_id}'"))?;
        let rows = self
            .pools
            .and_then(|p| p.rows_for(post_id));
        self.docs
            .search_within(post_id, q, depth, rows)
            .map_err(|e| e.to_string())
    }

    fn score(&self, post_id: &str, doc_id: &str) -> Option<f64> {
        let q = self.queries.vector(post_id)?;
        self.docs.similarity(q, doc_id).ok().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingTriplet {
    pub post_id: String,
    pub positive_id: String,
    pub negative_ids: Vec<String>,
    /// Retriever scores of the negatives, same order as `negative_ids`.
    pub negative_scores: Vec<f64>,
    pub query_text: String,
    pub positive_text: String,
    pub negative_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiningWarning {
    pub post_id: String,
    pub positive_id: String,
    pub requested: usize,
    pub found: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MiningOutcome {
    pub triplets: Vec<TrainingTriplet>,
    /// Pairs that got fewer negatives than requested.
    pub warnings: Vec<MiningWarning>,
    /// Non-gold candidates seen / skipped by the margin filter.
    pub candidates_considered: usize,
    pub margin_excluded: usize,
}

impl MiningOutcome {
    pub fn zero_negative_count(&self) -> usize {
        self.warnings.iter().filter(|w| w.found == 0).count()
    }
}

struct PairResult {
    triplet: TrainingTriplet,
    considered: usize,
    excluded: usize,
}

/// Mines one triplet per gold pair of `corpus`.
///
/// `selector` picks the query and document texts written into triplets;
/// the default view uses translated posts.
pub fn mine_negatives(
    retriever: &dyn Retriever,
    corpus: &Corpus,
    config: &MiningConfig,
    selector: &TextSelector,
) -> Result<MiningOutcome, MiningError> {
    config.validate()?;
    let posts_with_pairs: Vec<&str> = {
        let mut seen = HashSet::new();
        corpus
            .pairs()
            .iter()
            .filter(|p| seen.insert(p.post_id.as_str()))
            .map(|p| p.post_id.as_str())
            .collect()
    };
    let retrieved: HashMap<&str, Ranking> = posts_with_pairs
        .par_iter()
        .map(|&pid| {
            retriever
                .retrieve(pid, config.candidate_depth)
                .map(|r| (pid, r))
                .map_err(|reason| MiningError::Retrieval {
                    post_id: pid.to_string(),
                    reason,
                })
        })
        .collect::<Result<_, _>>()?;

    let results: Vec<PairResult> = corpus
        .pairs()
        .par_iter()
        .map(|pair| mine_pair(retriever, corpus, config, selector, pair, &retrieved))
        .collect::<Result<_, _>>()?;

    let mut outcome = MiningOutcome::default();
    for r in results {
        if r.triplet.negative_ids.len() < config.negatives_per_query {
            outcome.warnings.push(MiningWarning {
                post_id: r.triplet.post_id.clone(),
                positive_id: r.triplet.positive_id.clone(),
                requested: config.negatives_per_query,
                found: r.triplet.negative_ids.len(),
            });
        }
        outcome.candidates_considered += r.considered;
        outcome.margin_excluded += r.excluded;
        outcome.triplets.push(r.triplet);
    }
    Ok(outcome)
}

fn mine_pair(
    retriever: &dyn Retriever,
    corpus: &Corpus,
    config: &MiningConfig,
    selector: &TextSelector,
    pair: &crate::corpus::RelevancePair,
    retrieved: &HashMap<&str, Ranking>,
) -> Result<PairResult, MiningError> {
    let post = corpus.post(&pair.post_id).expect("validated pair");
    let positive = corpus.fact_check(&pair.fact_check_id).expect("validated pair");
    let gold = corpus.gold_for(&pair.post_id).expect("post has pairs");
    let query_text = post.select_text(selector)?;
    let positive_text = positive.select_text(selector)?;
    let threshold = config.margin.and_then(|m| {
        retriever
            .score(&pair.post_id, &pair.fact_check_id)
            .map(|s| s - m)
    });

    let mut triplet = TrainingTriplet {
        post_id: pair.post_id.clone(),
        positive_id: pair.fact_check_id.clone(),
        negative_ids: Vec::new(),
        negative_scores: Vec::new(),
        query_text,
        positive_text,
        negative_texts: Vec::new(),
    };
    let mut used_texts: HashSet<String> = HashSet::new();
    let (mut considered, mut excluded) = (0, 0);
    for entry in retrieved[pair.post_id.as_str()].entries() {
        if gold.contains(&entry.doc_id) {
            continue;
        }
        considered += 1;
        if threshold.is_some_and(|t| entry.score >= t) {
            excluded += 1;
            continue;
        }
        if triplet.negative_ids.len() == config.negatives_per_query {
            continue;
        }
        let Some(fc) = corpus.fact_check(&entry.doc_id) else {
            continue;
        };
        let text = fc.select_text(selector)?;
        // identical texts would make contradictory training signal
        if text == triplet.positive_text || !used_texts.insert(text.clone()) {
            continue;
        }
        triplet.negative_ids.push(entry.doc_id.clone());
        triplet.negative_scores.push(entry.score);
        triplet.negative_texts.push(text);
    }
    Ok(PairResult {
        triplet,
        considered,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    /// One line per (query, positive, single negative).
    JsonlTriplet,
    /// One line per query with all negatives in an array.
    JsonlPairWithNegs,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl_triplet" => Ok(ExportFormat::JsonlTriplet),
            "jsonl_pair_with_negs" => Ok(ExportFormat::JsonlPairWithNegs),
            other => Err(format!("unknown export format '{other}'")),
        }
    }
}

pub fn write_triplets<W: Write>(
    mut out: W,
    triplets: &[TrainingTriplet],
    format: ExportFormat,
) -> std::io::Result<()> {
    for t in triplets {
        match format {
            ExportFormat::JsonlTriplet => {
                for neg in &t.negative_texts {
                    let line = json!({
                        "query": t.query_text,
                        "positive": t.positive_text,
                        "negative": neg,
                    });
                    writeln!(out, "{line}")?;
                }
            }
            ExportFormat::JsonlPairWithNegs => {
                let line = json!({
                    "query": t.query_text,
                    "positive": t.positive_text,
                    "negatives": t.negative_texts,
                });
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

pub fn export_triplets(
    triplets: &[TrainingTriplet],
    path: &Path,
    format: ExportFormat,
) -> Result<(), MiningError> {
    let io_err = |source| MiningError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    write_triplets(&mut w, triplets, format).map_err(io_err)?;
    w.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub triplets: usize,
    pub mean_negatives: f64,
    pub exclusion_rate: f64,
}

/// Mines once per `n` in `n_values` (candidate depth raised to `n` when
/// needed) and summarizes each run.
pub fn mining_sweep(
    retriever: &dyn Retriever,
    corpus: &Corpus,
    base: &MiningConfig,
    selector: &TextSelector,
    n_values: &[usize],
) -> Result<Vec<SweepRow>, MiningError> {
    if n_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(MiningError::Config("sweep values must be ascending".into()));
    }
    n_values
        .iter()
        .map(|&n| {
            let cfg = MiningConfig {
                negatives_per_query: n,
                candidate_depth: base.candidate_depth.max(n),
                margin: base.margin,
            };
            let outcome = mine_negatives(retriever, corpus, &cfg, selector)?;
            let total: usize = outcome.triplets.iter().map(|t| t.negative_ids.len()).sum();
            let count = outcome.triplets.len();
            Ok(SweepRow {
                n,
                triplets: count,
                mean_negatives: if count == 0 { 0.0 } else { total as f64 / count as f64 },
                exclusion_rate: if outcome.candidates_considered == 0 {
                    0.0
                } else {
                    outcome.margin_excluded as f64 / outcome.candidates_considered as f64
                },
            })
        })
        .collect()
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n\ttriplets\tmean_negatives\texclusion_rate\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\n",
            r.n, r.triplets, r.mean_negatives, r.exclusion_rate
        ));
    }
    out
}
