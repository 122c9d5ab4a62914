//! Best-effort conversion of MultiClaim-style CSV exports to corpus JSONL.
//!
//! Two layouts are recognized from the header row:
//!
//! * MultiClaim: `post_id, ocr, text, ...` / `fact_check_id, claim, title, ...`
//!   where text cells are Python tuple literals
//!   `(original, english, [(lang, confidence), ...])` and `ocr` is a list of
//!   such tuples. Pairs come as `fact_check_id, post_id`.
//! * Plain: the JSONL field names used directly as CSV columns.
//!
//! Rows that cannot be converted are skipped and counted; pairs that point
//! at skipped rows are dropped.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{
    is_language_code, normalize_whitespace, write_corpus, Corpus, CorpusError, FactCheck, Post,
    RelevancePair, ValidationReport,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: unrecognized header {header:?}")]
    Layout { path: String, header: Vec<String> },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Value of a Python literal as found in MultiClaim cells.
#[derive(Debug, Clone, PartialEq)]
pub enum PyValue {
    Str(String),
    Num(f64),
    Bool(bool),
    None,
    Seq(Vec<PyValue>),
}

impl PyValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            PyValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_seq(&self) -> Option<&[PyValue]> {
        match self {
            PyValue::Seq(v) => Some(v),
            _ => None,
        }
    }
}

struct LiteralParser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
}

impl LiteralParser<'_> {
    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|c| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn value(&mut self) -> Result<PyValue, String> {
        self.skip_ws();
        match self.chars.peek().copied() {
            Some('\'') | Some('"') => self.string(),
            Some('(') | Some('[') => self.seq(),
            Some(c) if c == '-' || c == '+' || c == '.' || c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let word: String = std::iter::from_fn(|| {
                    self.chars.next_if(|c| c.is_ascii_alphanumeric() || *c == '_')
                })
                .collect();
                match word.as_str() {
                    "None" => Ok(PyValue::None),
                    "True" => Ok(PyValue::Bool(true)),
                    "False" => Ok(PyValue::Bool(false)),
                    other => Err(format!("unexpected identifier '{other}'")),
                }
            }
            Some(c) => Err(format!("unexpected character '{c}'")),
            None => Err("unexpected end of input".into()),
        }
    }

    fn string(&mut self) -> Result<PyValue, String> {
        let quote = self.chars.next().expect("peeked quote");
        let mut out = String::new();
        loop {
            match self.chars.next() {
                None => return Err("unterminated string".into()),
                Some(c) if c == quote => return Ok(PyValue::Str(out)),
                Some('\\') => match self.chars.next() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    Some('0') => out.push('\0'),
                    Some('x') => out.push(self.hex_escape(2)?),
                    Some('u') => out.push(self.hex_escape(4)?),
                    Some('U') => out.push(self.hex_escape(8)?),
                    Some('\n') => {}
                    Some(c @ ('\\' | '\'' | '"')) => out.push(c),
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                    None => return Err("dangling escape".into()),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, String> {
        let hex: String = (0..digits).filter_map(|_| self.chars.next()).collect();
        u32::from_str_radix(&hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| format!("bad escape '{hex}'"))
    }

    fn number(&mut self) -> Result<PyValue, String> {
        let text: String = std::iter::from_fn(|| {
            self.chars
                .next_if(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.' | 'e' | 'E'))
        })
        .collect();
        text.parse()
            .map(PyValue::Num)
            .map_err(|_| format!("bad number '{text}'"))
    }

    fn seq(&mut self) -> Result<PyValue, String> {
        let open = self.chars.next().expect("peeked bracket");
        let close = if open == '(' { ')' } else { ']' };
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.chars.next_if_eq(&close).is_some() {
                return Ok(PyValue::Seq(items));
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.chars.next() {
                Some(',') => continue,
                Some(c) if c == close => return Ok(PyValue::Seq(items)),
                Some(c) => return Err(format!("expected ',' or '{close}', found '{c}'")),
                None => return Err("unterminated sequence".into()),
            }
        }
    }
}

/// Parses the subset of Python literal syntax used in MultiClaim CSVs.
pub fn parse_py_literal(text: &str) -> Result<PyValue, String> {
    let mut p = LiteralParser {
        chars: text.chars().peekable(),
    };
    let v = p.value()?;
    p.skip_ws();
    match p.chars.next() {
        None => Ok(v),
        Some(c) => Err(format!("trailing input starting at '{c}'")),
    }
}

/// A `(original, english, [(lang, p), ...])` cell.
#[derive(Debug, Clone, Default, PartialEq)]
struct TextTuple {
    original: String,
    english: Option<String>,
    language: Option<String>,
}

fn text_tuple(v: &PyValue) -> Option<TextTuple> {
    let items = v.as_seq()?;
    let original = items.first()?.as_str()?.to_string();
    let english = items.get(1).and_then(PyValue::as_str).map(str::to_string);
    let language = items.get(2).and_then(PyValue::as_seq).and_then(|langs| {
        langs
            .iter()
            .filter_map(|l| {
                let pair = l.as_seq()?;
                let code = pair.first()?.as_str()?;
                let p = match pair.get(1) {
                    Some(PyValue::Num(p)) => *p,
                    _ => 0.0,
                };
                Some((code.to_string(), p))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(code, _)| code)
    });
    Some(TextTuple {
        original,
        english,
        language,
    })
}

fn parse_cell_tuple(cell: &str) -> Option<TextTuple> {
    let cell = cell.trim();
    if cell.is_empty() {
        return None;
    }
    parse_py_literal(cell).ok().as_ref().and_then(text_tuple)
}

fn parse_cell_tuple_list(cell: &str) -> Vec<TextTuple> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Vec::new();
    }
    match parse_py_literal(cell) {
        Ok(PyValue::Seq(items)) => items.iter().filter_map(text_tuple).collect(),
        _ => Vec::new(),
    }
}

fn opt(s: Option<String>) -> Option<String> {
    s.map(|s| normalize_whitespace(&s)).filter(|s| !s.is_empty())
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub skipped_posts: usize,
    pub skipped_fact_checks: usize,
    pub dropped_pairs: usize,
    /// Skip reasons with counts.
    pub reasons: BTreeMap<String, usize>,
    pub validation: ValidationReport,
}

impl IngestSummary {
    fn skip(&mut self, reason: &str) {
        *self.reasons.entry(reason.to_string()).or_insert(0) += 1;
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<std::fs::File>, Vec<String>), IngestError> {
    let err = |source| IngestError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(err)?;
    let header = rdr
        .headers()
        .map_err(err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    Ok((rdr, header))
}

fn col(header: &[String], name: &str) -> Option<usize> {
    header.iter().position(|h| h == name)
}

fn language_or_und(code: Option<String>) -> String {
    code.map(|c| c.trim().to_lowercase())
        .filter(|c| is_language_code(c))
        .unwrap_or_else(|| "und".to_string())
}

fn read_posts(path: &Path, summary: &mut IngestSummary) -> Result<Vec<Post>, IngestError> {
    let (mut rdr, header) = open_csv(path)?;
    let layout_err = || IngestError::Layout {
        path: path.display().to_string(),
        header: header.clone(),
    };
    let multiclaim = col(&header, "post_id").is_some() && col(&header, "text").is_some();
    let plain = col(&header, "id").is_some() && col(&header, "original_text").is_some();
    if !multiclaim && !plain {
        return Err(layout_err());
    }
    let mut posts = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|source| IngestError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let get = |name: &str| col(&header, name).and_then(|i| row.get(i)).unwrap_or("");
        let post = if multiclaim {
            let text = parse_cell_tuple(get("text"));
            let ocr = parse_cell_tuple_list(get("ocr"));
            let ocr_text = ocr
                .iter()
                .map(|t| t.original.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            let english = match &text {
                Some(t) => t.english.clone(),
                None => {
                    let parts: Vec<&str> = ocr.iter().filter_map(|t| t.english.as_deref()).collect();
                    (!parts.is_empty()).then(|| parts.join("\n"))
                }
            };
            let language = text
                .as_ref()
                .and_then(|t| t.language.clone())
                .or_else(|| ocr.first().and_then(|t| t.language.clone()));
            Post {
                id: get("post_id").trim().to_string(),
                original_text: normalize_whitespace(
                    text.as_ref().map(|t| t.original.as_str()).unwrap_or(""),
                ),
                ocr_text: opt(Some(ocr_text)),
                translated_text: opt(english),
                language: language_or_und(language),
            }
        } else {
            Post {
                id: get("id").trim().to_string(),
                original_text: normalize_whitespace(get("original_text")),
                ocr_text: opt(Some(get("ocr_text").to_string())),
                translated_text: opt(Some(get("translated_text").to_string())),
                language: language_or_und(Some(get("language").to_string())),
            }
        };
        if post.id.is_empty() {
            summary.skipped_posts += 1;
            summary.skip("post without id");
        } else if post.original_text.is_empty() && post.ocr_text.is_none() {
            summary.skipped_posts += 1;
            summary.skip("post without text");
        } else {
            posts.push(post);
        }
    }
    Ok(posts)
}

fn read_fact_checks(path: &Path, summary: &mut IngestSummary) -> Result<Vec<FactCheck>, IngestError> {
    let (mut rdr, header) = open_csv(path)?;
    let multiclaim = col(&header, "fact_check_id").is_some() && col(&header, "claim").is_some();
    let plain = col(&header, "id").is_some() && col(&header, "claim").is_some();
    if !multiclaim && !plain {
        return Err(IngestError::Layout {
            path: path.display().to_string(),
            header,
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|source| IngestError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let get = |name: &str| col(&header, name).and_then(|i| row.get(i)).unwrap_or("");
        let fc = if multiclaim {
            let claim = parse_cell_tuple(get("claim"));
            let title = parse_cell_tuple(get("title"));
            FactCheck {
                id: get("fact_check_id").trim().to_string(),
                claim: normalize_whitespace(claim.as_ref().map(|c| c.original.as_str()).unwrap_or("")),
                title: opt(title.as_ref().map(|t| t.original.clone())),
                translated_claim: opt(claim.as_ref().and_then(|c| c.english.clone())),
                language: language_or_und(
                    claim
                        .as_ref()
                        .and_then(|c| c.language.clone())
                        .or_else(|| title.as_ref().and_then(|t| t.language.clone())),
                ),
            }
        } else {
            FactCheck {
                id: get("id").trim().to_string(),
                claim: normalize_whitespace(get("claim")),
                title: opt(Some(get("title").to_string())),
                translated_claim: opt(Some(get("translated_claim").to_string())),
                language: language_or_und(Some(get("language").to_string())),
            }
        };
        if fc.id.is_empty() || fc.claim.is_empty() {
            summary.skipped_fact_checks += 1;
            summary.skip("fact-check without id or claim");
        } else {
            out.push(fc);
        }
    }
    Ok(out)
}

fn read_pairs(path: &Path) -> Result<Vec<RelevancePair>, IngestError> {
    let (mut rdr, header) = open_csv(path)?;
    let (Some(p), Some(f)) = (col(&header, "post_id"), col(&header, "fact_check_id")) else {
        return Err(IngestError::Layout {
            path: path.display().to_string(),
            header,
        });
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|source| IngestError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        out.push(RelevancePair {
            post_id: row.get(p).unwrap_or("").trim().to_string(),
            fact_check_id: row.get(f).unwrap_or("").trim().to_string(),
        });
    }
    Ok(out)
}

/// Converts the three CSV files to a validated [`Corpus`].
pub fn convert_csv(
    posts_csv: &Path,
    fact_checks_csv: &Path,
    pairs_csv: &Path,
) -> Result<(Corpus, IngestSummary), IngestError> {
    let mut summary = IngestSummary::default();
    let mut posts = read_posts(posts_csv, &mut summary)?;
    let mut fact_checks = read_fact_checks(fact_checks_csv, &mut summary)?;

    let mut seen = HashSet::new();
    posts.retain(|p| {
        let fresh = seen.insert(p.id.clone());
        if !fresh {
            summary.skipped_posts += 1;
            *summary.reasons.entry("duplicate post id".into()).or_insert(0) += 1;
        }
        fresh
    });
    let mut seen = HashSet::new();
    fact_checks.retain(|f| {
        let fresh = seen.insert(f.id.clone());
        if !fresh {
            summary.skipped_fact_checks += 1;
            *summary.reasons.entry("duplicate fact-check id".into()).or_insert(0) += 1;
        }
        fresh
    });

    let post_ids: HashSet<&str> = posts.iter().map(|p| p.id.as_str()).collect();
    let fc_ids: HashSet<&str> = fact_checks.iter().map(|f| f.id.as_str()).collect();
    let mut seen_pairs = HashSet::new();
    let mut pairs = Vec::new();
    for pair in read_pairs(pairs_csv)? {
        let resolvable =
            post_ids.contains(pair.post_id.as_str()) && fc_ids.contains(pair.fact_check_id.as_str());
        if resolvable && seen_pairs.insert(pair.clone()) {
            pairs.push(pair);
        } else {
            summary.dropped_pairs += 1;
        }
    }
    let corpus = Corpus::new(posts, fact_checks, pairs)?;
    summary.validation = corpus.validation_report();
    Ok((corpus, summary))
}

/// Converts and writes `posts.jsonl`, `fact_checks.jsonl`, `pairs.jsonl`
/// into `out_dir`.
pub fn ingest_csv(
    posts_csv: &Path,
    fact_checks_csv: &Path,
    pairs_csv: &Path,
    out_dir: &Path,
) -> Result<IngestSummary, IngestError> {
    let (corpus, summary) = convert_csv(posts_csv, fact_checks_csv, pairs_csv)?;
    write_corpus(
        &corpus,
        &out_dir.join("posts.jsonl"),
        &out_dir.join("fact_checks.jsonl"),
        &out_dir.join("pairs.jsonl"),
    )?;
    Ok(summary)
}
