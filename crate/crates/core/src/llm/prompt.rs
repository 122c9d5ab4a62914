//! Prompt templates for the translation and reranking roles.
//!
//! Both templates are pinned byte-for-byte by golden files under
//! `tests/golden/`. Bump [`PROMPT_TEMPLATE_VERSION`] whenever either changes;
//! it is part of every cache key.

use serde::Serialize;

pub const PROMPT_TEMPLATE_VERSION: &str = "v1";

pub const TRANSLATION_INSTRUCTIONS: &str = "\
You are given text (possibly noisy social media data) that may be partially or entirely in a non-English language. \
It could contain repeated emojis, excessive punctuation, or minor errors.
Your task is to produce a \u{201c}cleaned but faithful\u{201d} English version. Specifically:
1) If the text is not in English, translate it to English as literally as possible.
2) Preserve important meaning, tone, and references (e.g., named entities, hashtags, or domain-specific terms).
3) Remove or reduce meaningless filler (like repeated punctuation or stray symbols) without losing factual content.
4) Avoid adding your own commentary, opinions, or extra interpretation. Keep the style and intent aligned with the original.";

const RERANK_HEADER: &str = "\
## You are an expert fact-checker and information retrieval specialist. Your task is to analyze a query and a set of articles to identify the most relevant ones for fact-checking purposes.

## Task:
1. Review the query that needs fact-checking
2. Analyze the candidate articles provided
3. Select the 10 most relevant articles that would be most useful for fact-checking the query
4. Return ONLY the article IDs of these 10 articles in a tab-separated format

## Important Instructions:
- Focus on selecting articles that:
  * Directly address the claim in the query
  * Provide factual evidence or counter-evidence
  * Come from reliable sources
  * Contain specific details relevant to the query
  * Cover different aspects of the claim for comprehensive fact-checking
- Output format must be EXACTLY:
  * Only article IDs
  * Tab-separated
  * One line only
  * Top 10 articles in order of relevance
  * No explanations or additional text

## Query for fact-checking: ";

const RERANK_AUGMENTATION: &str = "\n## Data Augmentations:  ";
const RERANK_CANDIDATES: &str = "\n## Candidate Articles:\n";
pub const RERANK_FOOTER: &str = "ONLY RETURN tab-seperated IDs....NOTHING ELSE";

/// Upper bound on candidates handed to the reranker.
pub const MAX_RERANK_CANDIDATES: usize = 50;

/// A chat prompt: optional system instructions plus one user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: Option<String>,
    pub user: String,
}

impl Prompt {
    /// Flat rendering used for cache keys and golden files.
    pub fn render(&self) -> String {
        match &self.system {
            Some(s) => format!("{s}\n\n{}", self.user),
            None => self.user.clone(),
        }
    }
}

pub fn build_translation_prompt(post_text: &str) -> Prompt {
    Prompt {
        system: Some(TRANSLATION_INSTRUCTIONS.to_string()),
        user: post_text.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankRequest {
    pub query_text: String,
    pub augmentation_text: Option<String>,
    pub candidates: Vec<(String, String)>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("rerank request has no candidates")]
    NoCandidates,
    #[error("rerank request has {0} candidates, limit is {MAX_RERANK_CANDIDATES}")]
    TooManyCandidates(usize),
    #[error("duplicate candidate id '{0}'")]
    DuplicateCandidate(String),
}

impl RerankRequest {
    pub fn new(
        query_text: impl Into<String>,
        augmentation_text: Option<String>,
        candidates: Vec<(String, String)>,
    ) -> Result<Self, RequestError> {
        if candidates.is_empty() {
            return Err(RequestError::NoCandidates);
        }
        if candidates.len() > MAX_RERANK_CANDIDATES {
            return Err(RequestError::TooManyCandidates(candidates.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for (id, _) in &candidates {
            if !seen.insert(id.as_str()) {
                return Err(RequestError::DuplicateCandidate(id.clone()));
            }
        }
        Ok(Self {
            query_text: query_text.into(),
            augmentation_text,
            candidates,
        })
    }

    pub fn candidate_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|(id, _)| id.as_str())
    }
}

/// Fills the rerank template. Slots are concatenated rather than string
/// replaced, so marker-like text inside a post cannot be substituted twice.
pub fn build_rerank_prompt(req: &RerankRequest) -> Prompt {
    let mut out = String::with_capacity(
        RERANK_HEADER.len() + req.candidates.iter().map(|(i, t)| i.len() + t.len() + 16).sum::<usize>(),
    );
    out.push_str(RERANK_HEADER);
    out.push_str(&req.query_text);
    out.push_str(RERANK_AUGMENTATION);
    out.push_str(req.augmentation_text.as_deref().unwrap_or(""));
    out.push_str(RERANK_CANDIDATES);
    for (id, text) in &req.candidates {
        out.push_str("ID: ");
        out.push_str(id);
        out.push_str("\nTEXT: ");
        out.push_str(text);
        out.push('\n');
    }
    out.push_str(RERANK_FOOTER);
    Prompt {
        system: None,
        user: out,
    }
}
