//! Reciprocal Rank Fusion.
//!
//! `score(d) = Σ_i w_i / (k_rrf + rank_i(d))`, ranks 1-based, lists that do
//! not contain `d` contribute nothing. Per-document contributions are summed
//! in ascending order so the result does not depend on input list order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::{Ranking, Stage};

pub const DEFAULT_K_RRF: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrfConfig {
    #[serde(default = "default_k")]
    pub k_rrf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

fn default_k() -> f64 {
    DEFAULT_K_RRF
}

impl Default for RrfConfig {
    fn default() -> Self {
        Self {
            k_rrf: DEFAULT_K_RRF,
            weights: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("rrf_fuse needs at least one ranking")]
    NoInputs,
    #[error("k_rrf must be positive and finite, got {0}")]
    BadK(f64),
    #[error("{weights} weights given for {inputs} rankings")]
    WeightCount { weights: usize, inputs: usize },
    #[error("weights must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("cannot fuse rankings of different queries ('{0}' vs '{1}')")]
    QueryMismatch(String, String),
}

impl RrfConfig {
    pub fn validate(&self, inputs: usize) -> Result<(), FusionError> {
        if !(self.k_rrf > 0.0 && self.k_rrf.is_finite()) {
            return Err(FusionError::BadK(self.k_rrf));
        }
        if let Some(w) = &self.weights {
            if w.len() != inputs {
                return Err(FusionError::WeightCount {
                    weights: w.len(),
                    inputs,
                });
            }
            if let Some(&bad) = w.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(FusionError::BadWeight(bad));
            }
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }
}

pub fn rrf_fuse(rankings: &[&Ranking], config: &RrfConfig) -> Result<Ranking, FusionError> {
    let first = rankings.first().ok_or(FusionError::NoInputs)?;
    config.validate(rankings.len())?;
    if let Some(other) = rankings.iter().find(|r| r.query_id != first.query_id) {
        return Err(FusionError::QueryMismatch(
            first.query_id.clone(),
            other.query_id.clone(),
        ));
    }
    let mut parts: HashMap<&str, Vec<f64>> = HashMap::new();
    for (i, ranking) in rankings.iter().enumerate() {
        let w = config.weight(i);
        for (pos, entry) in ranking.entries().iter().enumerate() {
            let rank = (pos + 1) as f64;
            parts
                .entry(entry.doc_id.as_str())
                .or_default()
                .push(w / (config.k_rrf + rank));
        }
    }
    let scores = parts.into_iter().map(|(id, mut contributions)| {
        contributions.sort_by(f64::total_cmp);
        (id.to_string(), contributions.iter().sum::<f64>())
    });
    Ok(Ranking::from_scores(first.query_id.clone(), Stage::Fused, scores)
        .expect("fused ids are unique"))
}

/// Fuses run files query by query. Queries are emitted in order of first
/// appearance across the inputs; a query missing from some inputs is fused
/// over the rankings that do contain it (weights follow the input index).
pub fn fuse_runs(runs: &[Vec<Ranking>], config: &RrfConfig) -> Result<Vec<Ranking>, FusionError> {
    if runs.is_empty() {
        return Err(FusionError::NoInputs);
    }
    config.validate(runs.len())?;
    let mut order: Vec<&str> = Vec::new();
    let mut by_query: HashMap<&str, Vec<(usize, &Ranking)>> = HashMap::new();
    for (i, run) in runs.iter().enumerate() {
        for r in run {
            let slot = by_query.entry(r.query_id.as_str()).or_insert_with(|| {
                order.push(r.query_id.as_str());
                Vec::new()
            });
            slot.push((i, r));
        }
    }
    order
        .into_iter()
        .map(|qid| {
            let present = &by_query[qid];
            let rankings: Vec<&Ranking> = present.iter().map(|(_, r)| *r).collect();
            let sub = RrfConfig {
                k_rrf: config.k_rrf,
                weights: config
                    .weights
                    .as_ref()
                    .map(|w| present.iter().map(|(i, _)| w[*i]).collect()),
            };
            rrf_fuse(&rankings, &sub)
        })
        .collect()
}
