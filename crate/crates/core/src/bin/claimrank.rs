//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure, 3 finished with fallbacks.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use claimrank::corpus::{read_jsonl, CorpusError, Post, RelevancePair};
use claimrank::dense::{DenseError, EmbeddingStore};
use claimrank::eval::{ablation_report, evaluate, EvalReport, GoldStandard};
use claimrank::fusion::{fuse_runs, RrfConfig};
use claimrank::ingest::{ingest_csv, IngestError};
use claimrank::mining::{
    export_triplets, mine_negatives, mining_sweep, sweep_tsv, DenseRetriever, ExportFormat,
    MiningConfig,
};
use claimrank::pipeline::{PipelineConfig, PipelineError, PipelineRunner};
use claimrank::ranking::{read_run_file, write_run, write_run_file, Ranking, RunFileError};

#[derive(Parser)]
#[command(name = "claimrank", version, about = "Fact-checked claim retrieval toolkit")]
struct Cli {
    /// Print errors as one JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Retriever {
    Dense,
    Sparse,
    /// Dense, fused with BM25 when the config enables it.
    Base,
}

#[derive(Subcommand)]
enum Command {
    /// Convert MultiClaim-style CSV files to corpus JSONL.
    Ingest {
        #[arg(long)]
        posts: PathBuf,
        #[arg(long)]
        fact_checks: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Translate posts without a translation; writes posts JSONL.
    Translate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `<output_dir>/posts_translated.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate an embeddings file.
    Index {
        #[arg(long)]
        embeddings: PathBuf,
        /// Corpus JSONL (posts or fact-checks) whose ids must all be covered.
        #[arg(long)]
        ids_from: Option<PathBuf>,
    },
    /// Retrieve candidates for every post (or one post).
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "base")]
        retriever: Retriever,
        /// Depth; defaults to the config's k_candidates.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        query_id: Option<String>,
        /// Run file to write; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine hard negatives from dense rankings.
    Mine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        negatives: usize,
        #[arg(long, default_value_t = 100)]
        depth: usize,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long, default_value = "jsonl_triplet")]
        format: ExportFormat,
        /// Comma-separated ascending values of n for a sweep report.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
        /// Where to write the sweep TSV; stdout when absent.
        #[arg(long)]
        sweep_out: Option<PathBuf>,
    },
    /// Rerank a run file with the configured reranker.
    Rerank {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reciprocal Rank Fusion over run files.
    Fuse {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        k_rrf: f64,
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run file with success@k.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Posts JSONL supplying languages; without it all queries share one slice.
        #[arg(long)]
        posts: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "run")]
        label: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the configured end-to-end pipeline.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Validate config and inputs only.
        #[arg(long)]
        dry_run: bool,
    },
    /// Ablation table from report JSON files.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Input or configuration problem detected by the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return (if e.is_validation() { 1 } else { 2 }, e.kind());
        }
        if cause.downcast_ref::<Invalid>().is_some() {
            return (1, "invalid");
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return match e {
                CorpusError::Io { .. } => (1, "missing_file"),
                _ => (1, "corpus"),
            };
        }
        if cause.downcast_ref::<DenseError>().is_some() {
            return (1, "embeddings");
        }
        if cause.downcast_ref::<RunFileError>().is_some() {
            return (1, "run_file");
        }
        if cause.downcast_ref::<IngestError>().is_some() {
            return (1, "ingest");
        }
    }
    (2, "runtime")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json_errors = cli.json_errors;
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let (code, kind) = classify(&err);
            if json_errors {
                let causes: Vec<String> = err.chain().skip(1).map(|c| c.to_string()).collect();
                eprintln!(
                    "{}",
                    json!({
                        "error": kind,
                        "message": err.to_string(),
                        "causes": causes,
                        "exit_code": code,
                    })
                );
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Ingest {
            posts,
            fact_checks,
            pairs,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let summary = ingest_csv(&posts, &fact_checks, &pairs, &out_dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
        Command::Translate { config, out } => translate(&config, out),
        Command::Index {
            embeddings,
            ids_from,
        } => index(&embeddings, ids_from.as_deref()),
        Command::Search {
            config,
            retriever,
            k,
            query_id,
            out,
        } => search(&config, retriever, k, query_id, out),
        Command::Mine {
            config,
            out,
            negatives,
            depth,
            margin,
            format,
            sweep,
            sweep_out,
        } => {
            let mining = MiningConfig {
                negatives_per_query: negatives,
                candidate_depth: depth,
                margin,
            };
            mine(&config, &out, mining, format, &sweep, sweep_out)
        }
        Command::Rerank { config, run, out } => rerank(&config, &run, &out),
        Command::Fuse {
            runs,
            k_rrf,
            weights,
            top,
            out,
        } => {
            let inputs = runs
                .iter()
                .map(|p| read_run_file(p))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = RrfConfig { k_rrf, weights };
            cfg.validate(inputs.len()).map_err(|e| invalid(e.to_string()))?;
            let mut fused = fuse_runs(&inputs, &cfg)?;
            if let Some(top) = top {
                if top == 0 {
                    bail!(invalid("--top must be at least 1"));
                }
                fused = fused.into_iter().map(|r| r.truncated(top)).collect();
            }
            write_run_file(&out, &fused)?;
            eprintln!("fused {} queries into {}", fused.len(), out.display());
            Ok(0)
        }
        Command::Eval {
            run,
            pairs,
            posts,
            k,
            label,
            json,
        } => {
            if k == 0 {
                bail!(invalid("--k must be at least 1"));
            }
            let rankings = read_run_file(&run)?;
            let pairs: Vec<RelevancePair> = read_jsonl(&pairs)?;
            let languages: HashMap<String, String> = match posts {
                Some(p) => read_jsonl::<Post>(&p)?
                    .into_iter()
                    .map(|p| (p.id, p.language))
                    .collect(),
                None => HashMap::new(),
            };
            let gold = GoldStandard::from_pairs(&pairs, |id| languages.get(id).cloned());
            let report = evaluate(&rankings, &gold, k, &label)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table());
            }
            Ok(0)
        }
        Command::Pipeline { config, dry_run } => {
            let cfg = PipelineConfig::load(&config)?;
            let runner = PipelineRunner::new(cfg);
            if dry_run {
                let summary = runner.dry_run()?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
                return Ok(0);
            }
            let outcome = runner.run()?;
            print!("{}", outcome.report.table());
            if outcome.fallbacks.total() > 0 {
                eprintln!(
                    "finished with {} fallbacks (translation {}, rerank transport {}, rerank unparseable {})",
                    outcome.fallbacks.total(),
                    outcome.fallbacks.translation,
                    outcome.fallbacks.rerank_transport,
                    outcome.fallbacks.rerank_unparseable
                );
            }
            eprintln!("outputs written to {}", outcome.output_dir.display());
            Ok(outcome.exit_code() as u8)
        }
        Command::Report { reports, out } => {
            let parsed = reports
                .iter()
                .map(|p| {
                    let text = std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<EvalReport>(&text)
                        .map_err(|e| invalid(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<_>>>()?;
            let table = ablation_report(&parsed).map_err(|e| invalid(e.to_string()))?;
            match out {
                Some(path) => std::fs::write(&path, table)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{table}"),
            }
            Ok(0)
        }
    }
}

fn translate(config: &Path, out: Option<PathBuf>) -> Result<u8> {
    let cfg = PipelineConfig::load(config)?;
    if !cfg.translation.enabled {
        bail!(invalid("[translation] is not enabled in the config"));
    }
    let out = out.unwrap_or_else(|| cfg.output_dir.join("posts_translated.jsonl"));
    let runner = PipelineRunner::new(cfg);
    let prepared = runner.prepare()?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    claimrank::corpus::write_jsonl(&out, prepared.corpus.posts())?;
    let fallbacks = prepared.translations.iter().filter(|t| t.fallback).count();
    eprintln!(
        "translated {} posts ({} fallbacks) into {}",
        prepared.translations.len(),
        fallbacks,
        out.display()
    );
    Ok(if fallbacks > 0 { 3 } else { 0 })
}

fn index(embeddings: &Path, ids_from: Option<&Path>) -> Result<u8> {
    let store = EmbeddingStore::load(embeddings)?;
    let mut missing = Vec::new();
    if let Some(path) = ids_from {
        let records: Vec<serde_json::Value> = read_jsonl(path)?;
        for r in records {
            let id = r.get("id").and_then(|v| v.as_str()).unwrap_or_default();
            if !store.contains(id) {
                missing.push(id.to_string());
            }
        }
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "path": embeddings.display().to_string(),
            "count": store.len(),
            "dim": store.dim(),
            "missing_ids": missing.len(),
        }))?
    );
    if let Some(first) = missing.first() {
        bail!(invalid(format!(
            "{} ids have no embedding (first: '{first}')",
            missing.len()
        )));
    }
    Ok(0)
}

fn search(
    config: &Path,
    retriever: Retriever,
    k: Option<usize>,
    query_id: Option<String>,
    out: Option<PathBuf>,
) -> Result<u8> {
    let cfg = PipelineConfig::load(config)?;
    let k = k.unwrap_or(cfg.k_candidates);
    if k == 0 {
        bail!(invalid("--k must be at least 1"));
    }
    let runner = PipelineRunner::new(cfg.clone());
    let prepared = runner.prepare()?;
    if let Some(q) = &query_id {
        if prepared.corpus.post(q).is_none() {
            bail!(invalid(format!("unknown post id '{q}'")));
        }
    }
    let mut rankings = match retriever {
        Retriever::Dense => prepared.dense_run_at(k)?,
        Retriever::Sparse => prepared.sparse_run_at(k)?,
        Retriever::Base => {
            let dense = prepared.dense_run_at(k)?;
            let sparse = match cfg.bm25.enabled {
                true => Some(prepared.sparse_run_at(k)?),
                false => None,
            };
            prepared
                .base_run(dense, sparse)?
                .into_iter()
                .map(|r| r.truncated(k))
                .collect()
        }
    };
    if let Some(q) = &query_id {
        rankings.retain(|r| &r.query_id == q);
    }
    emit_run(&rankings, out.as_deref())?;
    Ok(0)
}

fn emit_run(rankings: &[Ranking], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_run_file(path, rankings)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_run(&mut lock, rankings)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn mine(
    config: &Path,
    out: &Path,
    mining: MiningConfig,
    format: ExportFormat,
    sweep: &[usize],
    sweep_out: Option<PathBuf>,
) -> Result<u8> {
    mining.validate().map_err(|e| invalid(e.to_string()))?;
    let cfg = PipelineConfig::load(config)?;
    let selector = cfg.selector();
    let runner = PipelineRunner::new(cfg);
    let prepared = runner.prepare()?;
    let retriever = DenseRetriever {
        queries: &prepared.post_vectors,
        docs: &prepared.fc_vectors,
        pools: prepared.pools.as_ref(),
    };
    let outcome = mine_negatives(&retriever, &prepared.corpus, &mining, &selector)?;
    export_triplets(&outcome.triplets, out, format)?;
    eprintln!(
        "{} triplets written to {}; {} below the requested {} negatives ({} with none)",
        outcome.triplets.len(),
        out.display(),
        outcome.warnings.len(),
        mining.negatives_per_query,
        outcome.zero_negative_count()
    );
    if !sweep.is_empty() {
        let rows = mining_sweep(&retriever, &prepared.corpus, &mining, &selector, sweep)?;
        let tsv = sweep_tsv(&rows);
        match sweep_out {
            Some(path) => std::fs::write(&path, tsv)
                .with_context(|| format!("writing {}", path.display()))?,
            None => print!("{tsv}"),
        }
    }
    Ok(0)
}

fn rerank(config: &Path, run: &Path, out: &Path) -> Result<u8> {
    let cfg = PipelineConfig::load(config)?;
    if !cfg.rerank.enabled {
        bail!(invalid("[rerank] is not enabled in the config"));
    }
    let base = read_run_file(run)?;
    let runner = PipelineRunner::new(cfg);
    let prepared = runner.prepare()?;
    let result = prepared.rerank_run(&base)?;
    write_run_file(out, &result.rankings)?;
    let fallbacks = result.fallbacks();
    eprintln!(
        "reranked {} queries into {} ({} fallbacks)",
        result.rankings.len(),
        out.display(),
        fallbacks.total()
    );
    Ok(if fallbacks.total() > 0 { 3 } else { 0 })
}
