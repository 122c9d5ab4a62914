//! Two-stage retrieval of previously fact-checked claims.
//!
//! Dense retrieval over precomputed embeddings, optional BM25, LLM-based
//! translation and reranking behind a provider-agnostic chat client,
//! Reciprocal Rank Fusion, hard-negative mining, and success@k evaluation.

pub mod corpus;
pub mod dense;
pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod llm;
pub mod mining;
pub mod pipeline;
pub mod ranking;
pub mod sparse;

pub use corpus::{Corpus, FactCheck, PoolMode, Post, RelevancePair, TextMode, TextSelector};
pub use dense::EmbeddingStore;
pub use eval::{EvalReport, GoldStandard};
pub use fusion::RrfConfig;
pub use ranking::{Ranking, Stage};
pub use sparse::InvertedIndex;
