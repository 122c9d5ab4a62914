//! Ranked result lists and their TREC-run-style TSV serialization.
//!
//! A run file has one row per entry and no header:
//!
//! ```text
//! query_id <TAB> doc_id <TAB> rank <TAB> score <TAB> stage
//! ```
//!
//! Ranks are 1-based. Scores are written with the shortest representation
//! that round-trips, so reading a run file back yields bit-identical scores.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which retrieval stage produced a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Dense,
    Sparse,
    Reranked,
    Fused,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Dense => "dense",
            Stage::Sparse => "sparse",
            Stage::Reranked => "reranked",
            Stage::Fused => "fused",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Stage::Dense),
            "sparse" => Ok(Stage::Sparse),
            "reranked" => Ok(Stage::Reranked),
            "fused" => Ok(Stage::Fused),
            other => Err(format!("unknown stage '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("duplicate doc_id '{doc_id}' in ranking for query '{query_id}'")]
    DuplicateDoc { query_id: String, doc_id: String },
    #[error("ranking for query '{query_id}' is not sorted at position {position}")]
    Unsorted { query_id: String, position: usize },
    #[error("non-finite score for doc '{doc_id}' in query '{query_id}'")]
    NonFinite { query_id: String, doc_id: String },
}

/// Global ordering rule: score descending, then doc_id ascending.
pub fn entry_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

/// An ordered, duplicate-free list of scored documents for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub stage: Stage,
    entries: Vec<RankedDoc>,
}

impl Ranking {
    /// Builds a ranking from already-ordered entries, checking the invariants.
    pub fn new(
        query_id: impl Into<String>,
        stage: Stage,
        entries: Vec<RankedDoc>,
    ) -> Result<Self, RankingError> {
        let query_id = query_id.into();
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !e.score.is_finite() {
                return Err(RankingError::NonFinite {
                    query_id,
                    doc_id: e.doc_id.clone(),
                });
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(RankingError::DuplicateDoc {
                    query_id,
                    doc_id: e.doc_id.clone(),
                });
            }
            if i > 0 {
                let prev = &entries[i - 1];
                if entry_order(prev.score, &prev.doc_id, e.score, &e.doc_id) != Ordering::Less {
                    return Err(RankingError::Unsorted {
                        query_id,
                        position: i + 1,
                    });
                }
            }
        }
        Ok(Self {
            query_id,
            stage,
            entries,
        })
    }

    /// Sorts arbitrary `(doc_id, score)` pairs with the global tie rule.
    pub fn from_scores(
        query_id: impl Into<String>,
        stage: Stage,
        scores: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<Self, RankingError> {
        let mut entries: Vec<RankedDoc> = scores
            .into_iter()
            .map(|(doc_id, score)| RankedDoc { doc_id, score })
            .collect();
        entries.sort_by(|a, b| entry_order(a.score, &a.doc_id, b.score, &b.doc_id));
        Self::new(query_id, stage, entries)
    }

    pub fn empty(query_id: impl Into<String>, stage: Stage) -> Self {
        Self {
            query_id: query_id.into(),
            stage,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[RankedDoc] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    /// 1-based rank of `doc_id`, if present.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.doc_id == doc_id)
            .map(|p| p + 1)
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.entries.truncate(k);
        self
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }
}

#[derive(Debug, Error)]
pub enum RunFileError {
    #[error("i/o error on run file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: RankingError,
    },
}

pub fn write_run<W: Write>(mut out: W, rankings: &[Ranking]) -> std::io::Result<()> {
    for r in rankings {
        for (i, e) in r.entries.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.query_id,
                e.doc_id,
                i + 1,
                e.score,
                r.stage
            )?;
        }
    }
    Ok(())
}

pub fn write_run_file(path: &Path, rankings: &[Ranking]) -> Result<(), RunFileError> {
    let io_err = |source| RunFileError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_run(&mut w, rankings).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Reads a run file. Rankings come back in order of first appearance of
/// each query id; entries are re-ordered by their rank column.
pub fn read_run_file(path: &Path) -> Result<Vec<Ranking>, RunFileError> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| RunFileError::Io {
        path: name.clone(),
        source,
    })?;
    read_run(BufReader::new(file), &name)
}

pub fn read_run<R: BufRead>(reader: R, name: &str) -> Result<Vec<Ranking>, RunFileError> {
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, (Stage, Vec<(usize, RankedDoc)>)> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| RunFileError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| RunFileError::Malformed {
            path: name.to_string(),
            line: lineno,
            reason,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(malformed(format!("expected 5 columns, found {}", cols.len())));
        }
        let rank: usize = cols[2]
            .parse()
            .map_err(|_| malformed(format!("bad rank '{}'", cols[2])))?;
        let score: f64 = cols[3]
            .parse()
            .map_err(|_| malformed(format!("bad score '{}'", cols[3])))?;
        let stage: Stage = cols[4].parse().map_err(malformed)?;
        let query_id = cols[0].to_string();
        let slot = rows.entry(query_id.clone()).or_insert_with(|| {
            order.push(query_id.clone());
            (stage, Vec::new())
        });
        if slot.0 != stage {
            return Err(malformed(format!(
                "stage '{stage}' differs from earlier rows of query '{query_id}'"
            )));
        }
        slot.1.push((
            rank,
            RankedDoc {
                doc_id: cols[1].to_string(),
                score,
            },
        ));
    }
    order
        .into_iter()
        .map(|qid| {
            let (stage, mut entries) = rows.remove(&qid).expect("query recorded in order");
            entries.sort_by_key(|(rank, _)| *rank);
            Ranking::new(qid, stage, entries.into_iter().map(|(_, e)| e).collect()).map_err(
                |source| RunFileError::Invalid {
                    path: name.to_string(),
                    source,
                },
            )
        })
        .collect()
}
