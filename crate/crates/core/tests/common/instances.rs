//! Seeded random instances shared by the property and acceptance suites.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use claimrank::corpus::{FactCheck, Post, RelevancePair};
use claimrank::ranking::{RankedDoc, Ranking, Stage};
use claimrank::Corpus;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `n` Gaussian vectors with ids `d000`, `d001`, ...
pub fn dense_docs(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<(String, Vec<f64>)> {
    (0..n).map(|i| (format!("d{i:03}"), gaussian(rng, dim))).collect()
}

/// Between `min_lists` and `max_lists` rankings of up to `max_len` distinct
/// ids drawn from a shared pool, so lists overlap.
pub fn id_lists(
    rng: &mut impl Rng,
    min_lists: usize,
    max_lists: usize,
    max_len: usize,
) -> Vec<Vec<String>> {
    let pool: Vec<String> = (0..max_len * 2).map(|i| format!("d{i:03}")).collect();
    let n = rng.random_range(min_lists..=max_lists);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            let mut ids = pool.clone();
            ids.shuffle(rng);
            ids.truncate(len);
            ids
        })
        .collect()
}

/// Ranking with the given id order and strictly descending scores.
pub fn ranking(query_id: &str, ids: &[String]) -> Ranking {
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, id)| RankedDoc {
            doc_id: id.clone(),
            score: (ids.len() - i) as f64,
        })
        .collect();
    Ranking::new(query_id, Stage::Dense, entries).unwrap()
}

const VOCAB: &[&str] = &[
    "vaccine", "dna", "covid", "election", "fraud", "video", "fake", "water", "cure", "virus",
    "president", "mask", "photo", "bill", "tax", "flood", "cancer", "salt", "garlic", "phone",
];

/// Lowercase documents over a small vocabulary so terms repeat across
/// documents; lengths vary from 1 to `max_words`.
pub fn text_docs(rng: &mut impl Rng, n: usize, max_words: usize) -> Vec<(String, String)> {
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=max_words);
            let words: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
            (format!("doc{i:03}"), words.join(" "))
        })
        .collect()
}

pub fn text_query(rng: &mut impl Rng) -> String {
    let len = rng.random_range(1..=4);
    let mut words: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
    // a term that matches nothing
    if rng.random_bool(0.2) {
        words.push("zebra");
    }
    words.join(" ")
}

/// Small corpus: `n_posts` posts each paired with 1 to 3 of `n_fcs`
/// fact-checks, every text distinct.
pub fn small_corpus(rng: &mut impl Rng, n_posts: usize, n_fcs: usize) -> Corpus {
    let posts = (0..n_posts)
        .map(|i| Post {
            id: format!("p{i}"),
            original_text: format!("post number {i}"),
            ocr_text: None,
            translated_text: None,
            language: "eng".into(),
        })
        .collect();
    let fact_checks = (0..n_fcs)
        .map(|j| FactCheck {
            id: format!("f{j}"),
            claim: format!("claim number {j}"),
            title: None,
            translated_claim: None,
            language: "eng".into(),
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n_posts {
        let n_gold = rng.random_range(1..=3.min(n_fcs));
        let gold: BTreeSet<usize> = (0..n_gold).map(|_| rng.random_range(0..n_fcs)).collect();
        for j in gold {
            pairs.push(RelevancePair {
                post_id: format!("p{i}"),
                fact_check_id: format!("f{j}"),
            });
        }
    }
    Corpus::new(posts, fact_checks, pairs).unwrap()
}

/// Text that mixes candidate ids with noise, in the shapes models produce.
pub fn rerank_response(rng: &mut impl Rng, candidates: &[String]) -> String {
    const NOISE: &[&str] = &[
        "Here", "are", "the", "ids:", "1.", "-", "**", "none", "id", "fc-999", "\"", "[", "]",
        "Sure!", "ranking", "\u{00e9}t\u{00e9}", "\u{1F600}",
    ];
    const SEPS: &[&str] = &["\t", "\t", ", ", " ", "\n", ",", "  \t", ";"];
    let n = rng.random_range(0..=25);
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(SEPS[rng.random_range(0..SEPS.len())]);
        }
        let tok = if !candidates.is_empty() && rng.random_bool(0.6) {
            let id = &candidates[rng.random_range(0..candidates.len())];
            match rng.random_range(0..6) {
                0 => format!("\"{id}\""),
                1 => format!("[{id}]"),
                2 => format!("{id}."),
                3 => format!("`{id}`"),
                _ => id.clone(),
            }
        } else {
            NOISE[rng.random_range(0..NOISE.len())].to_string()
        };
        out.push_str(&tok);
    }
    out
}
