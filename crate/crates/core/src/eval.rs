//! success@k scoring, per-language breakdown and ablation tables.
//!
//! A query succeeds when any of its gold fact-checks appears in the first
//! `k` entries of its ranking. Queries without a ranking count as failures.
//! The macro average is the unweighted mean over languages.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, RelevancePair};
use crate::ranking::Ranking;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("gold set is empty")]
    EmptyGold,
    #[error("more than one ranking for query '{0}'")]
    DuplicateQuery(String),
    #[error("reports disagree on k ({0} vs {1})")]
    MixedK(usize, usize),
    #[error("no reports given")]
    NoReports,
}

pub fn success_at_k(ranking: &Ranking, gold: &BTreeSet<String>, k: usize) -> Result<bool, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(ranking.doc_ids().take(k).any(|id| gold.contains(id)))
}

/// Judged queries: post id → (language, gold fact-check ids).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldStandard {
    queries: BTreeMap<String, (String, BTreeSet<String>)>,
}

/// Language label used when post languages are unknown.
pub const UNKNOWN_LANGUAGE: &str = "all";

impl GoldStandard {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let langs: HashMap<&str, &str> = corpus
            .posts()
            .iter()
            .map(|p| (p.id.as_str(), p.language.as_str()))
            .collect();
        Self::from_pairs(corpus.pairs(), |id| langs.get(id).map(|l| l.to_string()))
    }

    /// Builds the gold standard from pairs alone; `language_of` supplies
    /// each post's language (posts it does not know go to `"all"`).
    pub fn from_pairs(
        pairs: &[RelevancePair],
        language_of: impl Fn(&str) -> Option<String>,
    ) -> Self {
        let mut queries: BTreeMap<String, (String, BTreeSet<String>)> = BTreeMap::new();
        for p in pairs {
            queries
                .entry(p.post_id.clone())
                .or_insert_with(|| {
                    let lang = language_of(&p.post_id).unwrap_or_else(|| UNKNOWN_LANGUAGE.into());
                    (lang, BTreeSet::new())
                })
                .1
                .insert(p.fact_check_id.clone());
        }
        Self { queries }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn gold(&self, post_id: &str) -> Option<&BTreeSet<String>> {
        self.queries.get(post_id).map(|(_, g)| g)
    }

    pub fn language(&self, post_id: &str) -> Option<&str> {
        self.queries.get(post_id).map(|(l, _)| l.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &BTreeSet<String>)> {
        self.queries
            .iter()
            .map(|(id, (lang, gold))| (id.as_str(), lang.as_str(), gold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_label: String,
    pub k: usize,
    pub per_language: BTreeMap<String, f64>,
    pub n_queries: BTreeMap<String, usize>,
    pub macro_avg: f64,
    /// Judged queries with no ranking (scored as failures).
    #[serde(default)]
    pub missing_rankings: usize,
    /// Rankings whose query has no gold pair (ignored).
    #[serde(default)]
    pub unjudged_rankings: usize,
}

pub fn evaluate(
    rankings: &[Ranking],
    gold: &GoldStandard,
    k: usize,
    config_label: &str,
) -> Result<EvalReport, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let mut by_query: HashMap<&str, &Ranking> = HashMap::with_capacity(rankings.len());
    let mut unjudged = 0;
    for r in rankings {
        if by_query.insert(r.query_id.as_str(), r).is_some() {
            return Err(EvalError::DuplicateQuery(r.query_id.clone()));
        }
        if gold.gold(&r.query_id).is_none() {
            unjudged += 1;
        }
    }
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut missing = 0;
    for (qid, lang, gold_ids) in gold.iter() {
        let hit = match by_query.get(qid) {
            Some(r) => success_at_k(r, gold_ids, k)?,
            None => {
                missing += 1;
                false
            }
        };
        let slot = hits.entry(lang.to_string()).or_insert((0, 0));
        slot.0 += hit as usize;
        slot.1 += 1;
    }
    let per_language: BTreeMap<String, f64> = hits
        .iter()
        .map(|(l, (h, n))| (l.clone(), *h as f64 / *n as f64))
        .collect();
    let macro_avg = if per_language.is_empty() {
        0.0
    } else {
        per_language.values().sum::<f64>() / per_language.len() as f64
    };
    Ok(EvalReport {
        config_label: config_label.to_string(),
        k,
        per_language,
        n_queries: hits.into_iter().map(|(l, (_, n))| (l, n)).collect(),
        macro_avg,
        missing_rankings: missing,
        unjudged_rankings: unjudged,
    })
}

pub fn evaluate_corpus(
    rankings: &[Ranking],
    corpus: &Corpus,
    k: usize,
    config_label: &str,
) -> Result<EvalReport, EvalError> {
    evaluate(rankings, &GoldStandard::from_corpus(corpus), k, config_label)
}

impl EvalReport {
    /// Human-readable table: one line per language, then the average.
    pub fn table(&self) -> String {
        let mut out = format!("language\tS@{}\tqueries\n", self.k);
        for (lang, v) in &self.per_language {
            out.push_str(&format!("{lang}\t{v:.4}\t{}\n", self.n_queries[lang]));
        }
        let total: usize = self.n_queries.values().sum();
        out.push_str(&format!("avg\t{:.4}\t{total}\n", self.macro_avg));
        out
    }
}

/// One row per report, sorted by average descending (ties keep input
/// order). Columns: config, each language, avg, delta. The delta is taken
/// against the first report given, which is treated as the baseline.
pub fn ablation_report(reports: &[EvalReport]) -> Result<String, EvalError> {
    let baseline = reports.first().ok_or(EvalError::NoReports)?;
    if let Some(r) = reports.iter().find(|r| r.k != baseline.k) {
        return Err(EvalError::MixedK(baseline.k, r.k));
    }
    let languages: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.per_language.keys().map(String::as_str))
        .collect();
    let mut order: Vec<&EvalReport> = reports.iter().collect();
    order.sort_by(|a, b| b.macro_avg.total_cmp(&a.macro_avg));

    let k = baseline.k;
    let mut out = String::from("config");
    for lang in &languages {
        out.push_str(&format!("\tS@{k} ({lang})"));
    }
    out.push_str(&format!("\tS@{k} (avg)\tdelta\n"));
    for r in order {
        out.push_str(&r.config_label);
        for lang in &languages {
            match r.per_language.get(*lang) {
                Some(v) => out.push_str(&format!("\t{v:.4}")),
                None => out.push_str("\t-"),
            }
        }
        let delta = r.macro_avg - baseline.macro_avg;
        out.push_str(&format!("\t{:.4}\t{}\n", r.macro_avg, format_delta(delta)));
    }
    Ok(out)
}

fn format_delta(delta: f64) -> String {
    let rounded = format!("{:.4}", delta.abs());
    if rounded == "0.0000" {
        rounded
    } else if delta > 0.0 {
        format!("+{rounded}")
    } else {
        format!("-{rounded}")
    }
}
