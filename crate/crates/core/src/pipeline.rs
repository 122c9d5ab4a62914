//! Configuration-driven end-to-end runs.
//!
//! A [`PipelineConfig`] (TOML) describes one ablation cell: inputs, which
//! optional stages are on, fusion parameters and the output directory.
//! [`PipelineRunner`] validates everything up front, then runs
//!
//! ```text
//! translate? -> dense top-k_candidates (+ BM25 via RRF)? -> rerank?
//!            -> RRF(base, reranked) -> truncate to final_k -> evaluate
//! ```
//!
//! and persists every intermediate ranking as a run file. The same stage
//! functions back the individual CLI subcommands, so a manual chain of
//! `search`, `rerank`, `fuse` and `eval` reproduces a pipeline run.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{
    load_corpus, Corpus, CorpusError, EmptyTextError, PoolMode, SelectText, TextMode,
    TextSelector, ValidationReport,
};
use crate::dense::{CandidatePools, DenseError, EmbeddingStore};
use crate::eval::{ablation_report, evaluate_corpus, EvalError, EvalReport};
use crate::fusion::{fuse_runs, FusionError, RrfConfig};
use crate::llm::{
    rerank_batch, translate_batch, ChatClient, ChatEndpointConfig, FallbackReason, HttpChatClient,
    LlmError, LlmStage, ParseStatus, RerankRequest, ResponseCache, Translation,
    MAX_RERANK_CANDIDATES,
};
use crate::llm::prompt::PROMPT_TEMPLATE_VERSION;
use crate::mining::MiningError;
use crate::ranking::{write_run_file, Ranking, RunFileError};
use crate::sparse::{Bm25Params, InvertedIndex, SparseError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    ConfigParse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("input file not found: {0}")]
    MissingFile(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("embeddings {path}: {source}")]
    Embeddings {
        path: String,
        #[source]
        source: DenseError,
    },
    #[error(transparent)]
    Text(#[from] EmptyTextError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("dense search failed: {0}")]
    Search(#[source] DenseError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    RunFile(#[from] RunFileError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Errors caused by bad configuration or inputs, as opposed to failures
    /// while work was in progress.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::ConfigRead { .. }
                | PipelineError::ConfigParse { .. }
                | PipelineError::Invalid(_)
                | PipelineError::MissingFile(_)
                | PipelineError::Corpus(_)
                | PipelineError::Embeddings { .. }
                | PipelineError::Text(_)
                | PipelineError::Llm(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::ConfigRead { .. } | PipelineError::ConfigParse { .. } => "config",
            PipelineError::Invalid(_) => "invalid",
            PipelineError::MissingFile(_) => "missing_file",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Embeddings { .. } => "embeddings",
            PipelineError::Text(_) => "empty_text",
            PipelineError::Llm(_) => "llm",
            PipelineError::Search(_) => "search",
            PipelineError::Sparse(_) => "sparse",
            PipelineError::Fusion(_) => "fusion",
            PipelineError::Eval(_) => "eval",
            PipelineError::RunFile(_) => "run_file",
            PipelineError::Mining(_) => "mining",
            PipelineError::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub posts: PathBuf,
    pub fact_checks: PathBuf,
    pub pairs: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingPaths {
    pub posts: PathBuf,
    pub fact_checks: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Config {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
}

fn default_k1() -> f64 {
    crate::sparse::DEFAULT_K1
}
fn default_b() -> f64 {
    crate::sparse::DEFAULT_B
}

impl Default for Bm25Config {
    fn default() -> Self {
        Self {
            enabled: false,
            k1: default_k1(),
            b: default_b(),
        }
    }
}

impl Bm25Config {
    pub fn params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }
}

/// One LLM role (`[rerank]` or `[translation]`): the endpoint fields sit
/// directly in the table next to `enabled` and `cache_dir`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmRoleConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub endpoint: ChatEndpointConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_label")]
    pub label: String,
    pub corpus: CorpusPaths,
    pub embeddings: EmbeddingPaths,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub text_mode: TextMode,
    #[serde(default = "default_true")]
    pub include_title: bool,
    #[serde(default)]
    pub pool: PoolMode,
    #[serde(default = "default_k_candidates")]
    pub k_candidates: usize,
    #[serde(default = "default_final_k")]
    pub final_k: usize,
    /// Worker threads for retrieval and client calls. Defaults to the
    /// available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub rrf: RrfConfig,
    #[serde(default)]
    pub bm25: Bm25Config,
    #[serde(default)]
    pub rerank: LlmRoleConfig,
    #[serde(default)]
    pub translation: LlmRoleConfig,
}

fn default_label() -> String {
    "run".to_string()
}
fn default_true() -> bool {
    true
}
fn default_k_candidates() -> usize {
    50
}
fn default_final_k() -> usize {
    10
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::ConfigRead {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            PipelineError::ConfigParse { message, .. } => PipelineError::ConfigParse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::ConfigParse {
                path: "<string>".into(),
                message: e.to_string(),
            })?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.posts);
        resolve(base, &mut self.corpus.fact_checks);
        resolve(base, &mut self.corpus.pairs);
        resolve(base, &mut self.embeddings.posts);
        resolve(base, &mut self.embeddings.fact_checks);
        resolve(base, &mut self.output_dir);
        for role in [&mut self.rerank, &mut self.translation] {
            if let Some(dir) = role.cache_dir.as_mut() {
                resolve(base, dir);
            }
        }
    }

    pub fn selector(&self) -> TextSelector {
        TextSelector {
            mode: self.text_mode,
            include_title: self.include_title,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }

    /// Number of base candidates shown to the reranker.
    pub fn rerank_depth(&self) -> usize {
        self.k_candidates.min(MAX_RERANK_CANDIDATES)
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::Invalid(m));
        if self.k_candidates == 0 || self.final_k == 0 {
            return invalid("k_candidates and final_k must be at least 1".into());
        }
        if self.final_k > self.k_candidates {
            return invalid(format!(
                "final_k ({}) must not exceed k_candidates ({})",
                self.final_k, self.k_candidates
            ));
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1".into());
        }
        self.rrf
            .validate(2)
            .map_err(|e| PipelineError::Invalid(format!("[rrf] {e}")))?;
        if !(self.bm25.k1 >= 0.0 && self.bm25.k1.is_finite()) {
            return invalid(format!("[bm25] k1 must be nonnegative, got {}", self.bm25.k1));
        }
        if !(0.0..=1.0).contains(&self.bm25.b) {
            return invalid(format!("[bm25] b must lie in [0, 1], got {}", self.bm25.b));
        }
        for (name, role) in [("rerank", &self.rerank), ("translation", &self.translation)] {
            if role.enabled {
                role.endpoint
                    .validate()
                    .map_err(|e| PipelineError::Invalid(format!("[{name}] {e}")))?;
            }
        }
        if self.translation.enabled && self.text_mode != TextMode::TranslatedWithFallback {
            return invalid(
                "translation is enabled but text_mode does not read translations".into(),
            );
        }
        Ok(())
    }

    /// Every input file the config references.
    pub fn input_files(&self) -> Vec<(&'static str, &Path)> {
        vec![
            ("posts", &self.corpus.posts),
            ("fact_checks", &self.corpus.fact_checks),
            ("pairs", &self.corpus.pairs),
            ("post_embeddings", &self.embeddings.posts),
            ("fact_check_embeddings", &self.embeddings.fact_checks),
        ]
    }

    pub fn check_files(&self) -> Result<(), PipelineError> {
        for (_, path) in self.input_files() {
            if !path.is_file() {
                return Err(PipelineError::MissingFile(path.display().to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FallbackCounts {
    pub translation: usize,
    pub rerank_transport: usize,
    pub rerank_unparseable: usize,
}

impl FallbackCounts {
    pub fn total(&self) -> usize {
        self.translation + self.rerank_transport + self.rerank_unparseable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DryRunSummary {
    pub posts: usize,
    pub fact_checks: usize,
    pub pairs: usize,
    pub dim: usize,
    pub validation: ValidationReport,
    pub stages: Vec<&'static str>,
    pub rerank_model: Option<String>,
    pub translation_model: Option<String>,
}

/// One line of `rerank_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RerankLogEntry {
    pub query_id: String,
    pub parse_status: Option<ParseStatus>,
    pub fallback: Option<FallbackReason>,
    pub returned: usize,
    pub raw_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankRun {
    pub rankings: Vec<Ranking>,
    pub log: Vec<RerankLogEntry>,
}

impl RerankRun {
    pub fn fallbacks(&self) -> FallbackCounts {
        let mut c = FallbackCounts::default();
        for e in &self.log {
            match e.fallback {
                Some(FallbackReason::Transport) => c.rerank_transport += 1,
                Some(FallbackReason::Unparseable) => c.rerank_unparseable += 1,
                None => {}
            }
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: EvalReport,
    pub fallbacks: FallbackCounts,
    pub output_dir: PathBuf,
    /// Run files written, relative to `output_dir`.
    pub run_files: Vec<String>,
}

impl PipelineOutcome {
    /// 0 on a clean run, 3 when any fallback was taken.
    pub fn exit_code(&self) -> i32 {
        if self.fallbacks.total() > 0 {
            3
        } else {
            0
        }
    }
}

#[derive(Clone, Copy)]
enum Role {
    Rerank,
    Translation,
}

/// Runs a [`PipelineConfig`]. Chat clients default to HTTP clients built
/// from the config and can be replaced for tests.
pub struct PipelineRunner {
    config: PipelineConfig,
    rerank_client: Option<Arc<dyn ChatClient>>,
    translation_client: Option<Arc<dyn ChatClient>>,
}

impl PipelineRunner {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            config,
            rerank_client: None,
            translation_client: None,
        }
    }

    pub fn with_rerank_client(mut self, client: Arc<dyn ChatClient>) -> Self {
        self.rerank_client = Some(client);
        self
    }

    pub fn with_translation_client(mut self, client: Arc<dyn ChatClient>) -> Self {
        self.translation_client = Some(client);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn role(&self, role: Role) -> (&LlmRoleConfig, &Option<Arc<dyn ChatClient>>) {
        match role {
            Role::Rerank => (&self.config.rerank, &self.rerank_client),
            Role::Translation => (&self.config.translation, &self.translation_client),
        }
    }

    /// The client for an enabled role. Building an HTTP client reads the
    /// API key but sends nothing.
    fn client(&self, role: Role) -> Result<Option<Arc<dyn ChatClient>>, PipelineError> {
        let (cfg, injected) = self.role(role);
        if !cfg.enabled {
            return Ok(None);
        }
        if let Some(c) = injected {
            return Ok(Some(Arc::clone(c)));
        }
        let client = HttpChatClient::new(cfg.endpoint.clone())?;
        Ok(Some(Arc::new(client)))
    }

    fn cache(&self, role: Role) -> Result<Option<ResponseCache>, PipelineError> {
        let (cfg, _) = self.role(role);
        match &cfg.cache_dir {
            Some(dir) => ResponseCache::open(dir).map(Some).map_err(io_err(dir)),
            None => Ok(None),
        }
    }

    fn load_inputs(&self) -> Result<(Corpus, EmbeddingStore, EmbeddingStore), PipelineError> {
        let cfg = &self.config;
        cfg.validate()?;
        cfg.check_files()?;
        let corpus = load_corpus(&cfg.corpus.posts, &cfg.corpus.fact_checks, &cfg.corpus.pairs)?;
        let load = |p: &PathBuf| {
            EmbeddingStore::load(p).map_err(|source| PipelineError::Embeddings {
                path: p.display().to_string(),
                source,
            })
        };
        let posts = load(&cfg.embeddings.posts)?;
        let fact_checks = load(&cfg.embeddings.fact_checks)?;
        check_embeddings(&corpus, &posts, &fact_checks)?;
        let selector = cfg.selector();
        for p in corpus.posts() {
            p.select_text(&selector)?;
        }
        Ok((corpus, posts, fact_checks))
    }

    /// Validates config, inputs and clients without any network traffic.
    pub fn dry_run(&self) -> Result<DryRunSummary, PipelineError> {
        let (corpus, posts, _) = self.load_inputs()?;
        let rerank = self.client(Role::Rerank)?;
        let translation = self.client(Role::Translation)?;
        let (p, f, r) = corpus.counts();
        let mut stages = Vec::new();
        if translation.is_some() {
            stages.push("translate");
        }
        stages.push("dense");
        if self.config.bm25.enabled {
            stages.push("sparse");
        }
        if rerank.is_some() {
            stages.push("rerank");
            stages.push("fuse");
        }
        stages.push("eval");
        Ok(DryRunSummary {
            posts: p,
            fact_checks: f,
            pairs: r,
            dim: posts.dim(),
            validation: corpus.validation_report(),
            stages,
            rerank_model: rerank.map(|c| c.model_name().to_string()),
            translation_model: translation.map(|c| c.model_name().to_string()),
        })
    }

    /// Loads and validates inputs, builds the indexes and runs the
    /// translation stage when enabled.
    pub fn prepare(&self) -> Result<Prepared<'_>, PipelineError> {
        let (corpus, post_vectors, fc_vectors) = self.load_inputs()?;
        let rerank_client = self.client(Role::Rerank)?;
        let translation_client = self.client(Role::Translation)?;
        let rerank_cache = self.cache(Role::Rerank)?;
        let translation_cache = self.cache(Role::Translation)?;

        let pools = match self.config.pool {
            PoolMode::Full => None,
            PoolMode::SameLanguage => Some(CandidatePools::by_group(
                &fc_vectors,
                corpus
                    .fact_checks()
                    .iter()
                    .map(|f| (f.id.as_str(), f.language.as_str())),
                corpus
                    .posts()
                    .iter()
                    .map(|p| (p.id.as_str(), p.language.as_str())),
            )),
        };

        let mut prepared = Prepared {
            runner: self,
            corpus,
            post_vectors,
            fc_vectors,
            pools,
            translations: Vec::new(),
            rerank_client,
            rerank_cache,
        };
        if let Some(client) = translation_client {
            let mut stage = LlmStage::new(
                client.as_ref(),
                self.config.translation.endpoint.retry_policy(),
            );
            if let Some(cache) = translation_cache.as_ref() {
                stage = stage.with_cache(cache);
            }
            let pending: Vec<_> = prepared
                .corpus
                .posts()
                .iter()
                .filter(|p| p.translated_text.is_none())
                .collect();
            let workers = self
                .config
                .workers()
                .min(self.config.translation.endpoint.max_concurrent_requests);
            let translations = translate_batch(&stage, &pending, workers)?;
            let map: HashMap<String, String> = translations
                .iter()
                .filter(|t| !t.fallback)
                .map(|t| (t.post_id.clone(), t.text.clone()))
                .collect();
            prepared.corpus = prepared.corpus.with_translations(&map);
            prepared.translations = translations;
        }
        Ok(prepared)
    }

    /// Runs every stage and writes run files, report and manifest into
    /// `output_dir`.
    pub fn run(&self) -> Result<PipelineOutcome, PipelineError> {
        let prepared = self.prepare()?;
        let cfg = &self.config;
        let runs_dir = cfg.output_dir.join("runs");
        std::fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
        let mut run_files = Vec::new();
        let mut write = |name: &str, rankings: &[Ranking]| -> Result<(), PipelineError> {
            write_run_file(&runs_dir.join(name), rankings)?;
            run_files.push(format!("runs/{name}"));
            Ok(())
        };

        let dense = prepared.dense_run()?;
        write("dense.tsv", &dense)?;
        let sparse = prepared.sparse_run()?;
        if let Some(sparse) = &sparse {
            write("sparse.tsv", sparse)?;
        }
        let base = prepared.base_run(dense, sparse)?;
        if cfg.bm25.enabled {
            write("base.tsv", &base)?;
        }

        let mut fallbacks = FallbackCounts {
            translation: prepared.translations.iter().filter(|t| t.fallback).count(),
            ..FallbackCounts::default()
        };
        let reranked = match prepared.rerank_client.is_some() {
            true => {
                let run = prepared.rerank_run(&base)?;
                write("reranked.tsv", &run.rankings)?;
                let log_path = cfg.output_dir.join("rerank_log.jsonl");
                write_jsonl(&log_path, &run.log)?;
                let c = run.fallbacks();
                fallbacks.rerank_transport = c.rerank_transport;
                fallbacks.rerank_unparseable = c.rerank_unparseable;
                Some(run.rankings)
            }
            false => None,
        };
        let final_run = final_run(&base, reranked.as_deref(), &cfg.rrf, cfg.final_k)?;
        write("final.tsv", &final_run)?;

        if !prepared.translations.is_empty() {
            write_jsonl(&cfg.output_dir.join("translations.jsonl"), &prepared.translations)?;
        }

        let report = evaluate_corpus(&final_run, &prepared.corpus, cfg.final_k, &cfg.label)?;
        let report_json = cfg.output_dir.join("report.json");
        write_text(&report_json, &(pretty(&report) + "\n"))?;
        let report_tsv = cfg.output_dir.join("report.tsv");
        write_text(&report_tsv, &ablation_report(std::slice::from_ref(&report))?)?;

        let manifest = self.manifest(&prepared, &fallbacks, &run_files)?;
        write_text(&cfg.output_dir.join("manifest.json"), &(manifest + "\n"))?;

        Ok(PipelineOutcome {
            report,
            fallbacks,
            output_dir: cfg.output_dir.clone(),
            run_files,
        })
    }

    fn manifest(
        &self,
        prepared: &Prepared<'_>,
        fallbacks: &FallbackCounts,
        run_files: &[String],
    ) -> Result<String, PipelineError> {
        let mut inputs = BTreeMap::new();
        for (name, path) in self.config.input_files() {
            inputs.insert(
                name,
                json!({"path": path.display().to_string(), "sha256": sha256_file(path)?}),
            );
        }
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let model = |role: &LlmRoleConfig, c: Option<&Arc<dyn ChatClient>>| {
            role.enabled
                .then(|| c.map(|c| c.model_name().to_string()))
                .flatten()
        };
        let translation_client = self.client(Role::Translation)?;
        let value = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "prompt_template_version": PROMPT_TEMPLATE_VERSION,
            "created_unix": created,
            "label": self.config.label,
            "config": self.config,
            "inputs": inputs,
            "models": {
                "rerank": model(&self.config.rerank, prepared.rerank_client.as_ref()),
                "translation": model(&self.config.translation, translation_client.as_ref()),
            },
            "queries": prepared.corpus.posts().len(),
            "fallbacks": fallbacks,
            "outputs": run_files,
        });
        Ok(pretty(&value))
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    write_text(path, &out)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every post and every fact-check needs a vector, both stores share one
/// dimension, and the fact-check store holds nothing outside the corpus.
pub fn check_embeddings(
    corpus: &Corpus,
    posts: &EmbeddingStore,
    fact_checks: &EmbeddingStore,
) -> Result<(), PipelineError> {
    if posts.dim() != fact_checks.dim() {
        return Err(PipelineError::Invalid(format!(
            "post embeddings have dimension {}, fact-check embeddings {}",
            posts.dim(),
            fact_checks.dim()
        )));
    }
    let missing = |kind: &str, ids: Vec<&str>| {
        PipelineError::Invalid(format!(
            "{} {kind} have no embedding (first: '{}')",
            ids.len(),
            ids[0]
        ))
    };
    let no_post: Vec<&str> = corpus
        .posts()
        .iter()
        .map(|p| p.id.as_str())
        .filter(|id| !posts.contains(id))
        .collect();
    if !no_post.is_empty() {
        return Err(missing("posts", no_post));
    }
    let no_fc: Vec<&str> = corpus
        .fact_checks()
        .iter()
        .map(|f| f.id.as_str())
        .filter(|id| !fact_checks.contains(id))
        .collect();
    if !no_fc.is_empty() {
        return Err(missing("fact-checks", no_fc));
    }
    let known: HashSet<&str> = corpus.fact_checks().iter().map(|f| f.id.as_str()).collect();
    if let Some(extra) = fact_checks.ids().iter().find(|id| !known.contains(id.as_str())) {
        return Err(PipelineError::Invalid(format!(
            "fact-check embedding '{extra}' has no corpus record"
        )));
    }
    Ok(())
}

/// Base run fused with the reranked run and cut to `final_k`. Without a
/// reranked run the base run is only truncated.
pub fn final_run(
    base: &[Ranking],
    reranked: Option<&[Ranking]>,
    rrf: &RrfConfig,
    final_k: usize,
) -> Result<Vec<Ranking>, PipelineError> {
    let fused = match reranked {
        Some(reranked) => fuse_runs(&[base.to_vec(), reranked.to_vec()], rrf)?,
        None => base.to_vec(),
    };
    Ok(fused.into_iter().map(|r| r.truncated(final_k)).collect())
}

/// Loaded inputs plus the state shared by the stages.
pub struct Prepared<'r> {
    runner: &'r PipelineRunner,
    pub corpus: Corpus,
    pub post_vectors: EmbeddingStore,
    pub fc_vectors: EmbeddingStore,
    pub pools: Option<CandidatePools>,
    pub translations: Vec<Translation>,
    rerank_client: Option<Arc<dyn ChatClient>>,
    rerank_cache: Option<ResponseCache>,
}

impl Prepared<'_> {
    fn config(&self) -> &PipelineConfig {
        &self.runner.config
    }

    /// Dense top-`k_candidates` for every post, in corpus order.
    pub fn dense_run(&self) -> Result<Vec<Ranking>, PipelineError> {
        self.dense_run_at(self.config().k_candidates)
    }

    pub fn dense_run_at(&self, k: usize) -> Result<Vec<Ranking>, PipelineError> {
        let queries: Vec<(String, Vec<f32>)> = self
            .corpus
            .posts()
            .iter()
            .map(|p| {
                let v = self.post_vectors.vector(&p.id).expect("checked coverage");
                (p.id.clone(), v.to_vec())
            })
            .collect();
        let pools = self.pools.as_ref();
        self.fc_vectors
            .batch_search_within(&queries, k, Some(self.config().workers()), |q| {
                pools.and_then(|p| p.rows_for(q))
            })
            .map_err(PipelineError::Search)
    }

    /// BM25 top-`k_candidates` for every post, or `None` when disabled.
    pub fn sparse_run(&self) -> Result<Option<Vec<Ranking>>, PipelineError> {
        if !self.config().bm25.enabled {
            return Ok(None);
        }
        self.sparse_run_at(self.config().k_candidates).map(Some)
    }

    pub fn sparse_run_at(&self, k: usize) -> Result<Vec<Ranking>, PipelineError> {
        let selector = self.config().selector();
        let params = self.config().bm25.params();
        let mut groups: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        let group_of = |lang: &'_ str| -> String {
            match self.config().pool {
                PoolMode::Full => String::new(),
                PoolMode::SameLanguage => lang.to_string(),
            }
        };
        for f in self.corpus.fact_checks() {
            let key = match self.config().pool {
                PoolMode::Full => "",
                PoolMode::SameLanguage => f.language.as_str(),
            };
            groups
                .entry(key)
                .or_default()
                .push((f.id.clone(), f.select_text(&selector)?));
        }
        let mut indexes: HashMap<String, InvertedIndex> = HashMap::new();
        for (key, docs) in groups {
            indexes.insert(key.to_string(), InvertedIndex::build(docs)?);
        }
        let workers = self.config().workers();
        let queries: Vec<(&str, String, String)> = self
            .corpus
            .posts()
            .iter()
            .map(|p| Ok((p.id.as_str(), group_of(&p.language), p.select_text(&selector)?)))
            .collect::<Result<_, EmptyTextError>>()?;
        in_pool(workers, || {
            use rayon::prelude::*;
            queries
                .par_iter()
                .map(|(id, group, text)| match indexes.get(group) {
                    Some(index) => index.search(id, text, k, params).map_err(Into::into),
                    None => Ok(Ranking::empty(*id, crate::ranking::Stage::Sparse)),
                })
                .collect()
        })
    }

    /// Dense run, fused with the sparse run when present and cut to
    /// `k_candidates`.
    pub fn base_run(
        &self,
        dense: Vec<Ranking>,
        sparse: Option<Vec<Ranking>>,
    ) -> Result<Vec<Ranking>, PipelineError> {
        match sparse {
            None => Ok(dense),
            Some(sparse) => Ok(fuse_runs(&[dense, sparse], &self.config().rrf)?
                .into_iter()
                .map(|r| r.truncated(self.config().k_candidates))
                .collect()),
        }
    }

    /// Reranks the top [`PipelineConfig::rerank_depth`] entries of each base
    /// ranking. Queries with an empty base ranking are skipped.
    pub fn rerank_run(&self, base: &[Ranking]) -> Result<RerankRun, PipelineError> {
        let client = self.rerank_client.as_ref().ok_or_else(|| {
            PipelineError::Invalid("reranking is not enabled in the config".into())
        })?;
        let cfg = self.config();
        let selector = cfg.selector();
        let depth = cfg.rerank_depth();
        let mut jobs = Vec::new();
        for ranking in base.iter().filter(|r| !r.is_empty()) {
            let post = self.corpus.post(&ranking.query_id).ok_or_else(|| {
                PipelineError::Invalid(format!("run query '{}' is not a corpus post", ranking.query_id))
            })?;
            let mut candidates = Vec::with_capacity(depth);
            for id in ranking.doc_ids().take(depth) {
                let fc = self.corpus.fact_check(id).ok_or_else(|| {
                    PipelineError::Invalid(format!("run document '{id}' is not a corpus fact-check"))
                })?;
                candidates.push((id.to_string(), fc.select_text(&selector)?));
            }
            let req = RerankRequest::new(post.select_text(&selector)?, post.ocr_text.clone(), candidates)
                .map_err(|e| PipelineError::Invalid(e.to_string()))?;
            jobs.push((req, ranking.clone()));
        }
        let mut stage = LlmStage::new(client.as_ref(), cfg.rerank.endpoint.retry_policy());
        if let Some(cache) = self.rerank_cache.as_ref() {
            stage = stage.with_cache(cache);
        }
        let workers = cfg.workers().min(cfg.rerank.endpoint.max_concurrent_requests);
        let outcomes = rerank_batch(&stage, &jobs, workers);
        let mut run = RerankRun {
            rankings: Vec::with_capacity(outcomes.len()),
            log: Vec::with_capacity(outcomes.len()),
        };
        for o in outcomes {
            run.log.push(RerankLogEntry {
                query_id: o.ranking.query_id.clone(),
                parse_status: o.response.as_ref().map(|r| r.parse_status),
                fallback: o.fallback,
                returned: o.response.as_ref().map_or(0, |r| r.ranked_ids.len()),
                raw_text: o.response.map(|r| r.raw_text),
            });
            run.rankings.push(o.ranking);
        }
        Ok(run)
    }
}

fn in_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
