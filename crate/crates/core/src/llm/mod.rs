//! LLM roles: post translation and top-k reranking.
//!
//! Both roles go through a [`ChatClient`], a [`RetryPolicy`] and an optional
//! [`ResponseCache`]. Transport and model failures never abort a batch: a
//! translation falls back to the source text, a rerank falls back to the
//! base ranking's top 10. Only configuration errors propagate.

pub mod cache;
pub mod client;
pub mod parse;
pub mod prompt;

use serde::Serialize;

pub use cache::{cache_key, ResponseCache};
pub use client::{ChatClient, ChatEndpointConfig, HttpChatClient, LlmError, RetryPolicy};
pub use parse::{parse_rerank_response, ParseStatus, RerankResponse, RERANK_TOP};
pub use prompt::{
    build_rerank_prompt, build_translation_prompt, Prompt, RerankRequest, RequestError,
    MAX_RERANK_CANDIDATES,
};

use crate::corpus::{Post, SelectText, TextMode, TextSelector};
use crate::ranking::{RankedDoc, Ranking, Stage};

/// Shared plumbing for one LLM role.
#[derive(Clone, Copy)]
pub struct LlmStage<'a> {
    pub client: &'a dyn ChatClient,
    pub retry: RetryPolicy,
    pub cache: Option<&'a ResponseCache>,
}

impl<'a> LlmStage<'a> {
    pub fn new(client: &'a dyn ChatClient, retry: RetryPolicy) -> Self {
        Self {
            client,
            retry,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: &'a ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Cache lookup, then the client with retries. Successful raw responses
    /// are written back to the cache.
    fn call(&self, prompt: &Prompt, accept: impl Fn(&str) -> bool) -> Result<String, LlmError> {
        let key = self
            .cache
            .map(|_| cache_key(self.client.model_name(), &prompt.render()));
        if let (Some(cache), Some(key)) = (self.cache, key.as_deref()) {
            if let Some(hit) = cache.get(key) {
                if accept(&hit) {
                    return Ok(hit);
                }
            }
        }
        let raw = self.retry.complete(self.client, prompt)?;
        if let (Some(cache), Some(key)) = (self.cache, key.as_deref()) {
            if accept(&raw) {
                // a failed cache write only costs a repeated call later
                let _ = cache.put(key, &raw);
            }
        }
        Ok(raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Translation {
    pub post_id: String,
    pub text: String,
    /// Set when the model could not be reached and `text` is the source.
    pub fallback: bool,
}

/// Translates the post's original text (plus OCR text) to English.
pub fn translate_post(stage: &LlmStage<'_>, post: &Post) -> Result<Translation, LlmError> {
    let source = post
        .select_text(&TextSelector::new(TextMode::OriginalPlusOcr))
        .map_err(|e| LlmError::Config(e.to_string()))?;
    let prompt = build_translation_prompt(&source);
    match stage.call(&prompt, |raw| !raw.trim().is_empty()) {
        Ok(raw) if !raw.trim().is_empty() => Ok(Translation {
            post_id: post.id.clone(),
            text: raw.trim().to_string(),
            fallback: false,
        }),
        Err(e) if e.is_config() => Err(e),
        _ => Ok(Translation {
            post_id: post.id.clone(),
            text: source,
            fallback: true,
        }),
    }
}

fn in_pool<T: Send, R: Send>(
    workers: usize,
    items: Vec<T>,
    f: impl Fn(T) -> R + Send + Sync,
) -> Vec<R> {
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

/// Translates posts with at most `workers` requests in flight. Output order
/// follows input order.
pub fn translate_batch(
    stage: &LlmStage<'_>,
    posts: &[&Post],
    workers: usize,
) -> Result<Vec<Translation>, LlmError> {
    in_pool(workers, posts.to_vec(), |p| translate_post(stage, p))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    Transport,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RerankOutcome {
    pub ranking: Ranking,
    pub response: Option<RerankResponse>,
    pub fallback: Option<FallbackReason>,
}

/// Ranking with synthetic scores `1/position` for the given ids.
pub fn positional_ranking(query_id: &str, ids: &[String]) -> Ranking {
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, id)| RankedDoc {
            doc_id: id.clone(),
            score: 1.0 / (i + 1) as f64,
        })
        .collect();
    Ranking::new(query_id, Stage::Reranked, entries).expect("parsed ids are distinct")
}

/// Reranks `req.candidates` with the model. On transport failure or an
/// unparseable answer the base ranking's top 10 is returned instead.
pub fn rerank(stage: &LlmStage<'_>, req: &RerankRequest, base: &Ranking) -> RerankOutcome {
    let fallback = |reason, response| RerankOutcome {
        ranking: base.clone().truncated(RERANK_TOP).with_stage(Stage::Reranked),
        response,
        fallback: Some(reason),
    };
    let ids: Vec<&str> = req.candidate_ids().collect();
    let prompt = build_rerank_prompt(req);
    let raw = match stage.call(&prompt, |_| true) {
        Ok(raw) => raw,
        Err(_) => return fallback(FallbackReason::Transport, None),
    };
    let parsed = parse_rerank_response(&raw, &ids);
    if parsed.parse_status == ParseStatus::Failed {
        return fallback(FallbackReason::Unparseable, Some(parsed));
    }
    RerankOutcome {
        ranking: positional_ranking(&base.query_id, &parsed.ranked_ids),
        response: Some(parsed),
        fallback: None,
    }
}

pub fn rerank_batch(
    stage: &LlmStage<'_>,
    jobs: &[(RerankRequest, Ranking)],
    workers: usize,
) -> Vec<RerankOutcome> {
    in_pool(workers, jobs.iter().collect(), |(req, base)| {
        rerank(stage, req, base)
    })
}
