//! Parsing reranker output into candidate ids.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Maximum number of ids kept from a rerank response.
pub const RERANK_TOP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Clean,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RerankResponse {
    pub ranked_ids: Vec<String>,
    pub raw_text: String,
    pub parse_status: ParseStatus,
}

const WRAPPERS: &[char] = &['"', '\'', '`', '[', ']', '(', ')', '{', '}', '<', '>', '*', '.', ';', ':'];

fn keep_valid<'a>(
    tokens: impl Iterator<Item = &'a str>,
    candidates: &HashSet<&str>,
    repair: bool,
) -> (Vec<String>, bool) {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut all_valid = true;
    for raw in tokens {
        let token = raw.trim();
        if token.is_empty() {
            continue;
        }
        let resolved = if candidates.contains(token) {
            Some(token)
        } else if repair {
            Some(token.trim_matches(WRAPPERS)).filter(|t| candidates.contains(t))
        } else {
            None
        };
        match resolved {
            Some(id) if seen.insert(id) => out.push(id.to_string()),
            _ => all_valid = false,
        }
    }
    (out, all_valid)
}

/// Extracts up to [`RERANK_TOP`] distinct candidate ids from a response.
///
/// The response is first split on tabs. When that yields fewer than two
/// tokens (and is not a single valid id) or no valid id at all, a repair
/// pass splits on commas and any whitespace and strips quoting or
/// bracketing characters. Unknown tokens are dropped and duplicates keep
/// their first occurrence.
pub fn parse_rerank_response<S: AsRef<str>>(raw: &str, candidate_ids: &[S]) -> RerankResponse {
    let candidates: HashSet<&str> = candidate_ids.iter().map(AsRef::as_ref).collect();
    let tab_tokens: Vec<&str> = raw
        .trim()
        .split('\t')
        .filter(|t| !t.trim().is_empty())
        .collect();
    let (first, all_valid) = keep_valid(tab_tokens.iter().copied(), &candidates, false);
    let first_pass_ok =
        !first.is_empty() && (tab_tokens.len() >= 2 || (tab_tokens.len() == 1 && all_valid));

    let (mut ids, status) = if first_pass_ok {
        let status = if all_valid {
            ParseStatus::Clean
        } else {
            ParseStatus::Repaired
        };
        (first, status)
    } else {
        let split = raw.split(|c: char| c == ',' || c.is_whitespace());
        let (ids, _) = keep_valid(split, &candidates, true);
        let status = if ids.is_empty() {
            ParseStatus::Failed
        } else {
            ParseStatus::Repaired
        };
        (ids, status)
    };
    ids.truncate(RERANK_TOP);
    RerankResponse {
        ranked_ids: ids,
        raw_text: raw.to_string(),
        parse_status: status,
    }
}
