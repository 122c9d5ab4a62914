//! Posts, fact-checks and gold relevance pairs.
//!
//! All three collections are JSONL, one record per line. Text fields are
//! whitespace-normalized at ingestion (runs of spaces/tabs collapsed, ends
//! trimmed, case preserved); empty optional fields are treated as absent.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Language codes used in the evaluation tables; anything else is accepted
/// but listed in [`ValidationReport::unknown_languages`].
pub const KNOWN_LANGUAGES: &[&str] = &[
    "eng", "fra", "deu", "por", "spa", "tha", "msa", "ara", "tur", "pol",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    #[serde(default)]
    pub original_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_text: Option<String>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCheck {
    pub id: String,
    pub claim: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated_claim: Option<String>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelevancePair {
    pub post_id: String,
    pub fact_check_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMode {
    Original,
    OriginalPlusOcr,
    #[default]
    TranslatedWithFallback,
}

impl std::str::FromStr for TextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(TextMode::Original),
            "original_plus_ocr" => Ok(TextMode::OriginalPlusOcr),
            "translated_with_fallback" => Ok(TextMode::TranslatedWithFallback),
            other => Err(format!("unknown text mode '{other}'")),
        }
    }
}

/// Chooses which fields represent an item downstream.
///
/// For fact-checks, `include_title` prefixes the claim with its title
/// (title first, newline separated). A translated claim is used on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSelector {
    pub mode: TextMode,
    pub include_title: bool,
}

impl Default for TextSelector {
    fn default() -> Self {
        Self {
            mode: TextMode::TranslatedWithFallback,
            include_title: true,
        }
    }
}

impl TextSelector {
    pub fn new(mode: TextMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("item '{id}' has no text for mode {mode:?}")]
pub struct EmptyTextError {
    pub id: String,
    pub mode: TextMode,
}

fn non_empty(s: Option<&String>) -> Option<&str> {
    s.map(String::as_str).filter(|s| !s.is_empty())
}

fn join_lines(parts: &[Option<&str>]) -> String {
    parts
        .iter()
        .flatten()
        .copied()
        .collect::<Vec<_>>()
        .join("\n")
}

/// Anything that can be rendered to a single text for retrieval or prompts.
pub trait SelectText {
    fn select_text(&self, selector: &TextSelector) -> Result<String, EmptyTextError>;
}

impl SelectText for Post {
    fn select_text(&self, selector: &TextSelector) -> Result<String, EmptyTextError> {
        let original = Some(self.original_text.as_str()).filter(|s| !s.is_empty());
        let ocr = non_empty(self.ocr_text.as_ref());
        let text = match selector.mode {
            TextMode::Original => original.map(str::to_string).unwrap_or_default(),
            TextMode::OriginalPlusOcr => join_lines(&[original, ocr]),
            TextMode::TranslatedWithFallback => match non_empty(self.translated_text.as_ref()) {
                Some(t) => t.to_string(),
                None => join_lines(&[original, ocr]),
            },
        };
        if text.is_empty() {
            return Err(EmptyTextError {
                id: self.id.clone(),
                mode: selector.mode,
            });
        }
        Ok(text)
    }
}

impl SelectText for FactCheck {
    fn select_text(&self, selector: &TextSelector) -> Result<String, EmptyTextError> {
        let claim = Some(self.claim.as_str()).filter(|s| !s.is_empty());
        let title = if selector.include_title {
            non_empty(self.title.as_ref())
        } else {
            None
        };
        let text = match (selector.mode, non_empty(self.translated_claim.as_ref())) {
            (TextMode::TranslatedWithFallback, Some(t)) => t.to_string(),
            _ => join_lines(&[title, claim]),
        };
        if text.is_empty() {
            return Err(EmptyTextError {
                id: self.id.clone(),
                mode: selector.mode,
            });
        }
        Ok(text)
    }
}

pub fn select_text<T: SelectText>(item: &T, selector: &TextSelector) -> Result<String, EmptyTextError> {
    item.select_text(selector)
}

/// Collapses runs of spaces and tabs to one space on each line and trims
/// the result. Newlines are preserved; case is untouched.
pub fn normalize_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.trim().chars() {
        match ch {
            ' ' | '\t' => pending_space = true,
            '\n' | '\r' => {
                pending_space = false;
                // drop trailing blanks before a newline
                if ch == '\n' {
                    out.push('\n');
                }
            }
            _ => {
                if pending_space && !out.is_empty() && !out.ends_with('\n') {
                    out.push(' ');
                }
                pending_space = false;
                out.push(ch);
            }
        }
    }
    out
}

fn normalize_opt(s: Option<String>) -> Option<String> {
    s.map(|s| normalize_whitespace(&s)).filter(|s| !s.is_empty())
}

pub fn is_language_code(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_lowercase())
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: invalid record: {reason}")]
    InvalidRecord {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },
    #[error("pair references unknown {kind} '{id}'")]
    DanglingReference { kind: &'static str, id: String },
    #[error("duplicate pair ({post_id}, {fact_check_id})")]
    DuplicatePair {
        post_id: String,
        fact_check_id: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub posts: usize,
    pub fact_checks: usize,
    pub pairs: usize,
    /// Well-formed language codes outside [`KNOWN_LANGUAGES`], with counts.
    pub unknown_languages: BTreeMap<String, usize>,
    pub posts_without_pairs: usize,
}

/// Where the fact-check pool of a language slice comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Only fact-checks in the post's own language (monolingual track).
    SameLanguage,
    /// The whole fact-check collection (crosslingual track).
    #[default]
    Full,
}

impl std::str::FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "same_language" | "same-language" => Ok(PoolMode::SameLanguage),
            "full" => Ok(PoolMode::Full),
            other => Err(format!("unknown pool mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LanguageSlice<'a> {
    pub posts: Vec<&'a Post>,
    pub fact_checks: Vec<&'a FactCheck>,
    pub pairs: Vec<&'a RelevancePair>,
}

/// Immutable, validated collection of posts, fact-checks and gold pairs.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    fact_checks: Vec<FactCheck>,
    pairs: Vec<RelevancePair>,
    post_index: HashMap<String, usize>,
    fact_check_index: HashMap<String, usize>,
    gold: HashMap<String, BTreeSet<String>>,
}

impl Corpus {
    /// Validates and indexes the three collections. Records are
    /// whitespace-normalized first.
    pub fn new(
        posts: Vec<Post>,
        fact_checks: Vec<FactCheck>,
        pairs: Vec<RelevancePair>,
    ) -> Result<Self, CorpusError> {
        let posts: Vec<Post> = posts
            .into_iter()
            .enumerate()
            .map(|(i, p)| normalize_post(p).map_err(|reason| invalid("posts", i + 1, reason)))
            .collect::<Result<_, _>>()?;
        let fact_checks: Vec<FactCheck> = fact_checks
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                normalize_fact_check(f).map_err(|reason| invalid("fact_checks", i + 1, reason))
            })
            .collect::<Result<_, _>>()?;
        Self::from_normalized(posts, fact_checks, pairs)
    }

    fn from_normalized(
        posts: Vec<Post>,
        fact_checks: Vec<FactCheck>,
        pairs: Vec<RelevancePair>,
    ) -> Result<Self, CorpusError> {
        let mut post_index = HashMap::with_capacity(posts.len());
        for (i, p) in posts.iter().enumerate() {
            if post_index.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "post",
                    id: p.id.clone(),
                });
            }
        }
        let mut fact_check_index = HashMap::with_capacity(fact_checks.len());
        for (i, f) in fact_checks.iter().enumerate() {
            if fact_check_index.insert(f.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    kind: "fact_check",
                    id: f.id.clone(),
                });
            }
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut gold: HashMap<String, BTreeSet<String>> = HashMap::new();
        for pair in &pairs {
            if !post_index.contains_key(&pair.post_id) {
                return Err(CorpusError::DanglingReference {
                    kind: "post_id",
                    id: pair.post_id.clone(),
                });
            }
            if !fact_check_index.contains_key(&pair.fact_check_id) {
                return Err(CorpusError::DanglingReference {
                    kind: "fact_check_id",
                    id: pair.fact_check_id.clone(),
                });
            }
            if !seen.insert(pair) {
                return Err(CorpusError::DuplicatePair {
                    post_id: pair.post_id.clone(),
                    fact_check_id: pair.fact_check_id.clone(),
                });
            }
            gold.entry(pair.post_id.clone())
                .or_default()
                .insert(pair.fact_check_id.clone());
        }
        Ok(Self {
            posts,
            fact_checks,
            pairs,
            post_index,
            fact_check_index,
            gold,
        })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn fact_checks(&self) -> &[FactCheck] {
        &self.fact_checks
    }

    pub fn pairs(&self) -> &[RelevancePair] {
        &self.pairs
    }

    /// (posts, fact_checks, pairs)
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.posts.len(), self.fact_checks.len(), self.pairs.len())
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.post_index.get(id).map(|&i| &self.posts[i])
    }

    pub fn fact_check(&self, id: &str) -> Option<&FactCheck> {
        self.fact_check_index.get(id).map(|&i| &self.fact_checks[i])
    }

    /// Every gold fact-check id of a post (empty when the post has none).
    pub fn gold_for(&self, post_id: &str) -> Option<&BTreeSet<String>> {
        self.gold.get(post_id)
    }

    /// Returns a copy with the given post translations applied.
    pub fn with_translations(&self, translations: &HashMap<String, String>) -> Corpus {
        let mut out = self.clone();
        for p in &mut out.posts {
            if let Some(t) = translations.get(&p.id) {
                p.translated_text = Some(normalize_whitespace(t)).filter(|s| !s.is_empty());
            }
        }
        out
    }

    pub fn validation_report(&self) -> ValidationReport {
        let mut unknown_languages = BTreeMap::new();
        let langs = self
            .posts
            .iter()
            .map(|p| p.language.as_str())
            .chain(self.fact_checks.iter().map(|f| f.language.as_str()));
        for lang in langs {
            if !KNOWN_LANGUAGES.contains(&lang) {
                *unknown_languages.entry(lang.to_string()).or_insert(0) += 1;
            }
        }
        ValidationReport {
            posts: self.posts.len(),
            fact_checks: self.fact_checks.len(),
            pairs: self.pairs.len(),
            unknown_languages,
            posts_without_pairs: self
                .posts
                .iter()
                .filter(|p| !self.gold.contains_key(&p.id))
                .count(),
        }
    }

    /// Partitions posts by language. Each slice carries the pairs of its
    /// posts and a fact-check pool chosen by `pool`.
    pub fn split_by_language(&self, pool: PoolMode) -> BTreeMap<String, LanguageSlice<'_>> {
        let mut slices: BTreeMap<String, LanguageSlice<'_>> = BTreeMap::new();
        for post in &self.posts {
            slices
                .entry(post.language.clone())
                .or_default()
                .posts
                .push(post);
        }
        for pair in &self.pairs {
            let post = &self.posts[self.post_index[&pair.post_id]];
            if let Some(slice) = slices.get_mut(&post.language) {
                slice.pairs.push(pair);
            }
        }
        for (lang, slice) in slices.iter_mut() {
            slice.fact_checks = match pool {
                PoolMode::Full => self.fact_checks.iter().collect(),
                PoolMode::SameLanguage => self
                    .fact_checks
                    .iter()
                    .filter(|f| &f.language == lang)
                    .collect(),
            };
        }
        slices
    }
}

fn invalid(path: &str, line: usize, reason: String) -> CorpusError {
    CorpusError::InvalidRecord {
        path: path.to_string(),
        line,
        reason,
    }
}

fn normalize_post(p: Post) -> Result<Post, String> {
    let post = Post {
        id: p.id.trim().to_string(),
        original_text: normalize_whitespace(&p.original_text),
        ocr_text: normalize_opt(p.ocr_text),
        translated_text: normalize_opt(p.translated_text),
        language: p.language.trim().to_string(),
    };
    if post.id.is_empty() {
        return Err("empty id".into());
    }
    if post.original_text.is_empty() && post.ocr_text.is_none() {
        return Err(format!("post '{}' has neither original_text nor ocr_text", post.id));
    }
    if !is_language_code(&post.language) {
        return Err(format!(
            "post '{}' has language '{}', expected 3 lowercase letters",
            post.id, post.language
        ));
    }
    Ok(post)
}

fn normalize_fact_check(f: FactCheck) -> Result<FactCheck, String> {
    let fc = FactCheck {
        id: f.id.trim().to_string(),
        claim: normalize_whitespace(&f.claim),
        title: normalize_opt(f.title),
        translated_claim: normalize_opt(f.translated_claim),
        language: f.language.trim().to_string(),
    };
    if fc.id.is_empty() {
        return Err("empty id".into());
    }
    if fc.claim.is_empty() {
        return Err(format!("fact-check '{}' has an empty claim", fc.id));
    }
    if !is_language_code(&fc.language) {
        return Err(format!(
            "fact-check '{}' has language '{}', expected 3 lowercase letters",
            fc.id, fc.language
        ));
    }
    Ok(fc)
}

/// Reads a JSONL file into records, reporting 1-based line numbers.
/// Blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: name.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: name.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
            path: name.clone(),
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

fn read_validated<T, F>(path: &Path, normalize: F) -> Result<Vec<T>, CorpusError>
where
    T: serde::de::DeserializeOwned,
    F: Fn(T) -> Result<T, String>,
{
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: name.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: name.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|source| CorpusError::Parse {
            path: name.clone(),
            line: idx + 1,
            source,
        })?;
        out.push(normalize(record).map_err(|reason| invalid(&name, idx + 1, reason))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_corpus(
    posts_path: &Path,
    fact_checks_path: &Path,
    pairs_path: &Path,
) -> Result<Corpus, CorpusError> {
    let posts = read_validated(posts_path, normalize_post)?;
    let fact_checks = read_validated(fact_checks_path, normalize_fact_check)?;
    let pairs: Vec<RelevancePair> = read_jsonl(pairs_path)?;
    Corpus::from_normalized(posts, fact_checks, pairs)
}

pub fn write_corpus(
    corpus: &Corpus,
    posts_path: &Path,
    fact_checks_path: &Path,
    pairs_path: &Path,
) -> Result<(), CorpusError> {
    write_jsonl(posts_path, corpus.posts())?;
    write_jsonl(fact_checks_path, corpus.fact_checks())?;
    write_jsonl(pairs_path, corpus.pairs())
}
