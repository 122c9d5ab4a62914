//! Synthetic corpora with planted embeddings.
//!
//! `planted`: every post's first gold fact-check is its exact nearest
//! neighbour. A quarter of the posts carry a second gold fact-check.
//!
//! `adversarial`: one gold per post, placed at dense rank exactly 30 by
//! giving it a cosine midway between the 29th and 30th best non-gold
//! similarities.
//!
//! Both are checked in under `tests/fixtures/`; the `fixtures` test
//! regenerates them and fails on drift (`CLAIMRANK_REGEN_FIXTURES=1`
//! rewrites the files).

use std::path::{Path, PathBuf};

use claimrank::corpus::{write_jsonl, FactCheck, Post, RelevancePair};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const DIM: usize = 32;
pub const N_POSTS: usize = 50;
pub const N_FACT_CHECKS: usize = 500;
pub const LANGS: [&str; 5] = ["eng", "por", "spa", "fra", "deu"];
pub const ADVERSARIAL_RANK: usize = 30;

const WORDS: &[&str] = &[
    "vaccine", "election", "fraud", "water", "flood", "minister", "photo", "video", "army",
    "border", "virus", "mask", "tax", "pension", "bridge", "fire", "storm", "school", "police",
    "bank", "money", "oil", "price", "island", "doctor", "hospital", "protest", "court",
    "senator", "shark", "snake", "president", "mayor", "train", "airport", "ballot", "cure",
    "garlic", "lemon", "salt", "satellite", "moon", "earthquake", "dam", "farm", "milk", "bread",
    "church", "football", "stadium", "concert", "festival", "prison", "refugee", "ship", "camera",
    "phone", "network", "signal", "tower",
];

#[derive(Debug, Clone)]
pub struct Fixture {
    pub posts: Vec<Post>,
    pub fact_checks: Vec<FactCheck>,
    pub pairs: Vec<RelevancePair>,
    pub post_vectors: Vec<Vec<f32>>,
    pub fc_vectors: Vec<Vec<f32>>,
}

pub fn post_id(i: usize) -> String {
    format!("p{i:03}")
}

pub fn fc_id(j: usize) -> String {
    format!("fc{j:03}")
}

/// First gold fact-check of post `i`; same language as the post.
pub fn first_gold(i: usize) -> usize {
    5 * i + i % 5
}

/// Second gold fact-check for every fourth post.
pub fn second_gold(i: usize) -> Option<usize> {
    (i % 4 == 0).then(|| 5 * (i + N_POSTS) + i % 5)
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect()
}

fn texts(multi_positive: bool) -> (Vec<Post>, Vec<FactCheck>, Vec<RelevancePair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fact_checks: Vec<FactCheck> = (0..N_FACT_CHECKS)
        .map(|j| {
            let claim = format!("{} claim {j}", words(&mut rng, 7).join(" "));
            FactCheck {
                id: fc_id(j),
                claim,
                title: (j % 2 == 0).then(|| format!("Fact check {j}: {}", words(&mut rng, 3).join(" "))),
                translated_claim: None,
                language: LANGS[j % 5].to_string(),
            }
        })
        .collect();
    let mut posts = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..N_POSTS {
        let lang = LANGS[i % 5];
        let gold = &fact_checks[first_gold(i)];
        let mut body: Vec<&str> = gold.claim.split(' ').take(4).collect();
        body.extend(words(&mut rng, 3));
        body.shuffle(&mut rng);
        let original_text = format!("post {i} {}", body.join(" "));
        posts.push(Post {
            id: post_id(i),
            original_text: original_text.clone(),
            ocr_text: (i % 3 == 0).then(|| format!("image text {}", words(&mut rng, 2).join(" "))),
            translated_text: (lang != "eng" && i % 2 == 0).then(|| format!("english {original_text}")),
            language: lang.to_string(),
        });
        pairs.push(RelevancePair {
            post_id: post_id(i),
            fact_check_id: gold.id.clone(),
        });
        if multi_positive {
            if let Some(j) = second_gold(i) {
                pairs.push(RelevancePair {
                    post_id: post_id(i),
                    fact_check_id: fc_id(j),
                });
            }
        }
    }
    (posts, fact_checks, pairs)
}

fn gaussian(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn widen(v: &[f32]) -> Vec<f64> {
    unit(&v.iter().map(|&x| x as f64).collect::<Vec<_>>())
}

pub fn planted() -> Fixture {
    let (posts, fact_checks, pairs) = texts(true);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let fcs: Vec<Vec<f64>> = (0..N_FACT_CHECKS).map(|_| unit(&gaussian(&mut rng))).collect();
    let post_vectors: Vec<Vec<f64>> = (0..N_POSTS)
        .map(|i| {
            let noise = unit(&gaussian(&mut rng));
            let mut v: Vec<f64> = fcs[first_gold(i)]
                .iter()
                .zip(&noise)
                .map(|(g, n)| g + 0.2 * n)
                .collect();
            if let Some(j) = second_gold(i) {
                for (x, g) in v.iter_mut().zip(&fcs[j]) {
                    *x += 0.6 * g;
                }
            }
            unit(&v)
        })
        .collect();
    let fixture = Fixture {
        posts,
        fact_checks,
        pairs,
        post_vectors: post_vectors.iter().map(|v| to_f32(v)).collect(),
        fc_vectors: fcs.iter().map(|v| to_f32(v)).collect(),
    };
    for i in 0..N_POSTS {
        assert_eq!(
            oracle_rank(&fixture, i, first_gold(i)),
            1,
            "planted gold of post {i} is not its nearest neighbour"
        );
    }
    fixture
}

/// 1-based rank of fact-check `j` for post `i` under exact f64 cosine on
/// the stored f32 values (ties broken by id).
pub fn oracle_rank(f: &Fixture, i: usize, j: usize) -> usize {
    let q = widen(&f.post_vectors[i]);
    let target = dot(&q, &widen(&f.fc_vectors[j]));
    1 + f
        .fc_vectors
        .iter()
        .enumerate()
        .filter(|&(k, v)| {
            let s = dot(&q, &widen(v));
            k != j && (s > target || (s == target && k < j))
        })
        .count()
}

pub fn adversarial() -> Fixture {
    let (posts, fact_checks, pairs) = texts(false);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut fcs: Vec<Vec<f64>> = (0..N_FACT_CHECKS).map(|_| unit(&gaussian(&mut rng))).collect();
    let queries: Vec<Vec<f64>> = (0..N_POSTS).map(|_| unit(&gaussian(&mut rng))).collect();
    // Thresholds come from the non-gold fact-checks only. Each gold vector
    // is then drawn so that it stays below every other post's 30th
    // non-gold similarity, which keeps all thresholds valid at once.
    let golds: std::collections::HashSet<usize> = (0..N_POSTS).map(first_gold).collect();
    let limits: Vec<(f64, f64)> = queries
        .iter()
        .map(|q| {
            let mut sims: Vec<f64> = fcs
                .iter()
                .enumerate()
                .filter(|(k, _)| !golds.contains(k))
                .map(|(_, v)| dot(q, v))
                .collect();
            sims.sort_by(|a, b| b.total_cmp(a));
            let (above, below) = (sims[ADVERSARIAL_RANK - 2], sims[ADVERSARIAL_RANK - 1]);
            ((above + below) / 2.0, below)
        })
        .collect();
    for i in 0..N_POSTS {
        let q = &queries[i];
        let c = limits[i].0;
        let s = (1.0 - c * c).sqrt();
        let placed = (0..10_000).find_map(|_| {
            let r = gaussian(&mut rng);
            let proj = dot(&r, q);
            let u = unit(&r.iter().zip(q).map(|(x, y)| x - proj * y).collect::<Vec<_>>());
            let cand: Vec<f64> = q.iter().zip(&u).map(|(a, b)| c * a + s * b).collect();
            (0..N_POSTS)
                .filter(|&j| j != i)
                .all(|j| dot(&queries[j], &cand) < limits[j].1 - 1e-3)
                .then_some(cand)
        });
        fcs[first_gold(i)] = placed.expect("no admissible gold direction");
    }
    let fixture = Fixture {
        posts,
        fact_checks,
        pairs,
        post_vectors: queries.iter().map(|v| to_f32(v)).collect(),
        fc_vectors: fcs.iter().map(|v| to_f32(v)).collect(),
    };
    for i in 0..N_POSTS {
        assert_eq!(
            oracle_rank(&fixture, i, first_gold(i)),
            ADVERSARIAL_RANK,
            "adversarial gold of post {i} is not at rank {ADVERSARIAL_RANK}"
        );
    }
    fixture
}

#[derive(serde::Serialize)]
struct VectorRecord<'a> {
    id: &'a str,
    vec: &'a [f32],
}

pub const FILES: [&str; 5] = [
    "posts.jsonl",
    "fact_checks.jsonl",
    "pairs.jsonl",
    "post_vectors.jsonl",
    "fact_check_vectors.jsonl",
];

pub fn write_fixture(f: &Fixture, dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    write_jsonl(&dir.join(FILES[0]), &f.posts).unwrap();
    write_jsonl(&dir.join(FILES[1]), &f.fact_checks).unwrap();
    write_jsonl(&dir.join(FILES[2]), &f.pairs).unwrap();
    let vectors = |ids: Vec<&str>, vs: &[Vec<f32>]| -> Vec<u8> {
        let mut out = Vec::new();
        for (id, v) in ids.into_iter().zip(vs) {
            serde_json::to_writer(&mut out, &VectorRecord { id, vec: v }).unwrap();
            out.push(b'\n');
        }
        out
    };
    std::fs::write(
        dir.join(FILES[3]),
        vectors(f.posts.iter().map(|p| p.id.as_str()).collect(), &f.post_vectors),
    )
    .unwrap();
    std::fs::write(
        dir.join(FILES[4]),
        vectors(f.fact_checks.iter().map(|p| p.id.as_str()).collect(), &f.fc_vectors),
    )
    .unwrap();
}

pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Pipeline config over a checked-in fixture. `extra` is appended verbatim
/// (top-level keys must come before any table, so pass tables only).
pub fn config_toml(fixture: &str, output_dir: &Path, top_level: &str, extra: &str) -> String {
    let dir = fixture_dir(fixture);
    let p = |f: &str| dir.join(f).display().to_string();
    format!(
        r#"label = "{fixture}"
output_dir = "{out}"
workers = 4
{top_level}

[corpus]
posts = "{posts}"
fact_checks = "{fcs}"
pairs = "{pairs}"

[embeddings]
posts = "{pv}"
fact_checks = "{fv}"
{extra}
"#,
        out = output_dir.display(),
        posts = p(FILES[0]),
        fcs = p(FILES[1]),
        pairs = p(FILES[2]),
        pv = p(FILES[3]),
        fv = p(FILES[4]),
    )
}

/// `[rerank]` table pointing at `base_url` with fast retries.
pub fn rerank_table(base_url: &str) -> String {
    format!(
        "\n[rerank]\nenabled = true\nbase_url = \"{base_url}\"\nmodel_name = \"mock-reranker\"\nmax_retries = 1\nretry_backoff_ms = 0\ntimeout_secs = 10\n"
    )
}
