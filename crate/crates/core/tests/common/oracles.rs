//! Reference implementations written straight from the formulas, with no
//! code shared with the library.

use std::collections::{BTreeSet, HashMap};

/// Sorts by score descending; scores within `tie` of each other count as
/// equal and are ordered by id.
fn sort_with_ties(mut v: Vec<(String, f64)>, tie: f64) -> Vec<(String, f64)> {
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut out = Vec::with_capacity(v.len());
    let mut i = 0;
    while i < v.len() {
        let mut j = i + 1;
        while j < v.len() && (v[i].1 - v[j].1).abs() <= tie {
            j += 1;
        }
        let mut group = v[i..j].to_vec();
        group.sort_by(|a, b| a.0.cmp(&b.0));
        out.extend(group);
        i = j;
    }
    out
}

/// Exact cosine top-k in f64 over raw (unnormalized) vectors.
pub fn dense_top_k(docs: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let qn = norm(query);
    let scored = docs
        .iter()
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| a * b).sum();
            (id.clone(), dot / (norm(v) * qn))
        })
        .collect();
    let mut out = sort_with_ties(scored, 0.0);
    out.truncate(k);
    out
}

/// Weighted Reciprocal Rank Fusion: sum of w / (k + rank) over the lists
/// containing each document.
pub fn rrf(lists: &[Vec<String>], weights: &[f64], k: f64) -> Vec<(String, f64)> {
    let mut scores: HashMap<String, f64> = HashMap::new();
    for (list, w) in lists.iter().zip(weights) {
        for (i, id) in list.iter().enumerate() {
            *scores.entry(id.clone()).or_insert(0.0) += w / (k + (i + 1) as f64);
        }
    }
    sort_with_ties(scores.into_iter().collect(), 1e-12)
}

/// Okapi BM25 over whitespace-tokenized lowercase documents. Query terms
/// are deduplicated; documents scoring zero are left out.
pub fn bm25(
    docs: &[(String, String)],
    query: &str,
    k1: f64,
    b: f64,
    k: usize,
) -> Vec<(String, f64)> {
    let tokenized: Vec<Vec<&str>> = docs.iter().map(|(_, t)| t.split_whitespace().collect()).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<&str> = query.split_whitespace().collect();
    let mut scored = Vec::new();
    for ((id, _), toks) in docs.iter().zip(&tokenized) {
        let dl = toks.len() as f64;
        let mut s = 0.0;
        let mut matched = false;
        for t in &terms {
            let tf = toks.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = tokenized.iter().filter(|d| d.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
        }
        if matched && s > 0.0 {
            scored.push((id.clone(), s));
        }
    }
    let mut out = sort_with_ties(scored, 1e-12);
    out.truncate(k);
    out
}

pub fn success_at_k(ranked: &[String], gold: &BTreeSet<String>, k: usize) -> bool {
    ranked.iter().take(k).any(|id| gold.contains(id))
}

/// Checks a library top-k against the full oracle list (every document,
/// best first). Scores must agree within `tol` position by position, each
/// returned id must carry its oracle score, and ids must match exactly
/// wherever the oracle order is not within `tol` of a tie.
pub fn agrees(lib: &[(String, f64)], oracle_full: &[(String, f64)], k: usize, tol: f64) -> Result<(), String> {
    let top = &oracle_full[..k.min(oracle_full.len())];
    if lib.len() != top.len() {
        return Err(format!("length {} vs oracle {}", lib.len(), top.len()));
    }
    let by_id: HashMap<&str, f64> = oracle_full.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    for (i, ((id, s), (oid, os))) in lib.iter().zip(top).enumerate() {
        if (s - os).abs() > tol {
            return Err(format!("rank {}: score {s} vs oracle {os}", i + 1));
        }
        match by_id.get(id.as_str()) {
            Some(own) if (own - s).abs() <= tol => {}
            other => return Err(format!("rank {}: '{id}' has oracle score {other:?}, library {s}", i + 1)),
        }
        let isolated = |j: usize| (os - oracle_full[j].1).abs() > 2.0 * tol;
        let clear = (i == 0 || isolated(i - 1)) && (i + 1 >= oracle_full.len() || isolated(i + 1));
        if clear && id != oid {
            return Err(format!("rank {}: '{id}' vs oracle '{oid}'", i + 1));
        }
    }
    Ok(())
}
