//! The `claimrank` binary: exit codes, error output and stage isolation.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use claimrank::corpus::select_text;
use common::fixtures::{self, config_toml, rerank_table};
use common::mock::{Behavior, MockServer};

fn claimrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_claimrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&claimrank(&["--help"])), 0);
    assert_eq!(code(&claimrank(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&claimrank(&["frobnicate"])), 1);
    assert_eq!(code(&claimrank(&["pipeline"])), 1);
}

#[test]
fn missing_input_exits_one_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_toml("planted", &dir.path().join("out"), "", "")
        .replace("posts.jsonl", "no_such_posts.jsonl");
    let config = write_config(dir.path(), &text);
    let out = claimrank(&["--json-errors", "pipeline", "--config", s(&config)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let err: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["error"], "missing_file");
    assert_eq!(err["exit_code"], 1);
    assert!(err["message"].as_str().unwrap().contains("no_such_posts.jsonl"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_toml("planted", &dir.path().join("out"), "k_candiates = 40", "");
    let config = write_config(dir.path(), &text);
    let out = claimrank(&["--json-errors", "pipeline", "--config", s(&config)]);
    assert_eq!(code(&out), 1);
    let err: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["error"], "config");
}

#[test]
fn inconsistent_depths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_toml("planted", &dir.path().join("out"), "k_candidates = 5", "");
    let config = write_config(dir.path(), &text);
    let out = claimrank(&["pipeline", "--config", s(&config)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("final_k"), "{}", stderr(&out));
}

#[test]
fn garbage_reranker_exits_three() {
    let server = MockServer::start(Behavior::Garbage);
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let text = config_toml("planted", &out_dir, "", &rerank_table(&server.base_url));
    let config = write_config(dir.path(), &text);
    let out = claimrank(&["pipeline", "--config", s(&config)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(server.calls(), 50);
    assert!(stderr(&out).contains("rerank unparseable 50"));
    assert!(out_dir.join("runs/final.tsv").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("avg\t1.0000\t50"), "{stdout}");
}

#[test]
fn dry_run_makes_no_network_calls() {
    let server = MockServer::start(Behavior::Identity);
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let text = config_toml("planted", &out_dir, "", &rerank_table(&server.base_url));
    let config = write_config(dir.path(), &text);
    let out = claimrank(&["pipeline", "--config", s(&config), "--dry-run"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["posts"], 50);
    assert_eq!(summary["rerank_model"], "mock-reranker");
    assert_eq!(server.calls(), 0);
    assert!(!out_dir.exists());
}

/// The pipeline's final run equals the same stages invoked one by one.
#[test]
fn stages_compose_to_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = claimrank::corpus::load_corpus(
        &fixtures::fixture_dir("adversarial").join("posts.jsonl"),
        &fixtures::fixture_dir("adversarial").join("fact_checks.jsonl"),
        &fixtures::fixture_dir("adversarial").join("pairs.jsonl"),
    )
    .unwrap();
    let selector = claimrank::TextSelector::new(claimrank::TextMode::TranslatedWithFallback);
    let server = MockServer::start(common::mock::surface_map(&corpus, &selector));
    let out_dir = dir.path().join("out");
    let text = config_toml("adversarial", &out_dir, "", &rerank_table(&server.base_url));
    let config = write_config(dir.path(), &text);

    let out = claimrank(&["pipeline", "--config", s(&config)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let base = dir.path().join("base.tsv");
    let reranked = dir.path().join("reranked.tsv");
    let fused = dir.path().join("final.tsv");
    let step = claimrank(&["search", "--config", s(&config), "--retriever", "base", "--out", s(&base)]);
    assert_eq!(code(&step), 0, "{}", stderr(&step));
    let step = claimrank(&["rerank", "--config", s(&config), "--run", s(&base), "--out", s(&reranked)]);
    assert_eq!(code(&step), 0, "{}", stderr(&step));
    let step = claimrank(&["fuse", s(&base), s(&reranked), "--top", "10", "--out", s(&fused)]);
    assert_eq!(code(&step), 0, "{}", stderr(&step));

    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&base), read(&out_dir.join("runs/dense.tsv")));
    assert_eq!(read(&reranked), read(&out_dir.join("runs/reranked.tsv")));
    assert_eq!(read(&fused), read(&out_dir.join("runs/final.tsv")));

    let fx = fixtures::fixture_dir("adversarial");
    let eval = claimrank(&[
        "eval",
        "--run",
        s(&fused),
        "--pairs",
        s(&fx.join("pairs.jsonl")),
        "--posts",
        s(&fx.join("posts.jsonl")),
        "--label",
        "adversarial",
        "--json",
    ]);
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    let manual: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let piped: serde_json::Value =
        serde_json::from_slice(&read(&out_dir.join("report.json"))).unwrap();
    assert_eq!(manual, piped);
    assert_eq!(manual["macro_avg"], 1.0);
}

#[test]
fn fuse_orders_the_textbook_pair() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    std::fs::write(&a, "q\td1\t1\t0.9\tdense\nq\td2\t2\t0.8\tdense\nq\td3\t3\t0.7\tdense\n").unwrap();
    std::fs::write(&b, "q\td2\t1\t0.9\tdense\nq\td3\t2\t0.8\tdense\nq\td1\t3\t0.7\tdense\n").unwrap();
    let fused = dir.path().join("f.tsv");
    let out = claimrank(&["fuse", s(&a), s(&b), "--out", s(&fused)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = claimrank::ranking::read_run_file(&fused).unwrap();
    assert_eq!(run[0].doc_ids().collect::<Vec<_>>(), ["d2", "d1", "d3"]);

    let out = claimrank(&["fuse", s(&a), s(&b), "--weights", "1", "--out", s(&fused)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn report_builds_an_ablation_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (label, eng, por) in [("dense", 0.5, 0.25), ("full", 0.75, 0.5)] {
        let report = serde_json::json!({
            "config_label": label,
            "k": 10,
            "per_language": {"eng": eng, "por": por},
            "n_queries": {"eng": 4, "por": 4},
            "macro_avg": (eng + por) / 2.0,
        });
        let p = dir.path().join(format!("{label}.json"));
        std::fs::write(&p, report.to_string()).unwrap();
        paths.push(p);
    }
    let out = claimrank(&["report", s(&paths[0]), s(&paths[1])]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "config\tS@10 (eng)\tS@10 (por)\tS@10 (avg)\tdelta");
    assert!(lines[1].starts_with("full\t0.7500\t0.5000\t0.6250\t+0.2500"), "{}", lines[1]);
    assert!(lines[2].starts_with("dense\t0.5000\t0.2500\t0.3750\t"), "{}", lines[2]);
}

#[test]
fn ingest_converts_csv_exports() {
    let dir = tempfile::tempdir().unwrap();
    let posts = dir.path().join("posts.csv");
    let fcs = dir.path().join("fact_checks.csv");
    let pairs = dir.path().join("pairs.csv");
    std::fs::write(
        &posts,
        "post_id,ocr,text\n1,[],\"('Vacina mata', 'Vaccine kills', [('por', 1.0)])\"\n2,[],\n",
    )
    .unwrap();
    std::fs::write(
        &fcs,
        "fact_check_id,claim,title\n7,\"('Vacinas não matam', 'Vaccines do not kill', [('por', 1.0)])\",\n",
    )
    .unwrap();
    std::fs::write(&pairs, "fact_check_id,post_id\n7,1\n7,2\n").unwrap();
    let out_dir = dir.path().join("jsonl");
    let out = claimrank(&[
        "ingest",
        "--posts",
        s(&posts),
        "--fact-checks",
        s(&fcs),
        "--pairs",
        s(&pairs),
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["skipped_posts"], 1);
    assert_eq!(summary["dropped_pairs"], 1);
    let corpus = claimrank::corpus::load_corpus(
        &out_dir.join("posts.jsonl"),
        &out_dir.join("fact_checks.jsonl"),
        &out_dir.join("pairs.jsonl"),
    )
    .unwrap();
    assert_eq!(corpus.counts(), (1, 1, 1));
    assert_eq!(corpus.post("1").unwrap().translated_text.as_deref(), Some("Vaccine kills"));
}

#[test]
fn index_reports_coverage() {
    let fx = fixtures::fixture_dir("planted");
    let out = claimrank(&[
        "index",
        "--embeddings",
        s(&fx.join("post_vectors.jsonl")),
        "--ids-from",
        s(&fx.join("posts.jsonl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let info: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(info["count"], 50);
    assert_eq!(info["dim"], fixtures::DIM);
    assert_eq!(info["missing_ids"], 0);

    let out = claimrank(&[
        "index",
        "--embeddings",
        s(&fx.join("post_vectors.jsonl")),
        "--ids-from",
        s(&fx.join("fact_checks.jsonl")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn mine_writes_triplets_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &config_toml("planted", &dir.path().join("out"), "", ""));
    let triplets = dir.path().join("triplets.jsonl");
    let sweep = dir.path().join("sweep.tsv");
    let out = claimrank(&[
        "mine",
        "--config",
        s(&config),
        "--out",
        s(&triplets),
        "--negatives",
        "5",
        "--sweep",
        "5,20,40,80",
        "--sweep-out",
        s(&sweep),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let corpus = claimrank::corpus::load_corpus(
        &fixtures::fixture_dir("planted").join("posts.jsonl"),
        &fixtures::fixture_dir("planted").join("fact_checks.jsonl"),
        &fixtures::fixture_dir("planted").join("pairs.jsonl"),
    )
    .unwrap();
    let text = std::fs::read_to_string(&triplets).unwrap();
    // one line per (post, positive, negative)
    assert_eq!(text.lines().count(), 63 * 5);
    let selector = claimrank::TextSelector::new(claimrank::TextMode::TranslatedWithFallback);
    let gold_texts: std::collections::HashMap<String, Vec<String>> = corpus
        .posts()
        .iter()
        .map(|p| {
            let gold = corpus.gold_for(&p.id).unwrap();
            let texts = gold
                .iter()
                .map(|g| select_text(corpus.fact_check(g).unwrap(), &selector).unwrap())
                .collect();
            (select_text(p, &selector).unwrap(), texts)
        })
        .collect();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let gold = &gold_texts[v["query"].as_str().unwrap()];
        assert!(gold.iter().any(|g| g == v["positive"].as_str().unwrap()));
        assert!(!gold.iter().any(|g| g == v["negative"].as_str().unwrap()));
    }

    let table = std::fs::read_to_string(&sweep).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["n", "triplets", "mean_negatives", "exclusion_rate"]);
    assert_eq!(rows.len(), 5);
    for (row, n) in rows[1..].iter().zip([5, 20, 40, 80]) {
        assert_eq!(row[0], n.to_string());
        assert_eq!(row[1], "63");
        assert_eq!(row[2], format!("{n}.0000"));
    }
}

#[test]
fn translate_command_writes_translated_posts() {
    let server = MockServer::start(Behavior::Identity);
    let dir = tempfile::tempdir().unwrap();
    let extra = format!(
        "\n[translation]\nenabled = true\nbase_url = \"{}\"\nmodel_name = \"mock\"\nretry_backoff_ms = 0\n",
        server.base_url
    );
    let config = write_config(dir.path(), &config_toml("planted", &dir.path().join("out"), "", &extra));
    let target = dir.path().join("translated.jsonl");
    let out = claimrank(&["translate", "--config", s(&config), "--out", s(&target)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let posts: Vec<claimrank::Post> = claimrank::corpus::read_jsonl(&target).unwrap();
    assert_eq!(posts.len(), 50);
    assert!(posts.iter().all(|p| p.translated_text.is_some()));
    assert!(server.calls() > 0);
}
