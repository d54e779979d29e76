//! MRR@k over reranker score files, with short/long document breakdowns.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{token_count, DocumentSet, QrelPair, QrelSet};

pub const DEFAULT_KS: [usize; 2] = [3, 10];
pub const DEFAULT_LENGTH_THRESHOLD: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate score for ({0:?}, {1:?})")]
    DuplicateEntry(String, String),
    #[error("non-finite score for ({0:?}, {1:?})")]
    NonFinite(String, String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("query {0:?} has judgments but no scored documents")]
    MissingQuery(String),
    #[error("no judged queries to evaluate")]
    NoQueries,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// What to do with a judged query that has no entries in the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Error,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub query_id: String,
    pub doc_id: String,
    pub score: f64,
}

/// Scores of a reranker run, one per (query, document).
#[derive(Debug, Clone, Default)]
pub struct RunScores {
    entries: Vec<ScoreEntry>,
}

impl RunScores {
    pub fn new(entries: Vec<ScoreEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(EvalError::NonFinite(e.query_id.clone(), e.doc_id.clone()));
            }
            if !seen.insert((e.query_id.as_str(), e.doc_id.as_str())) {
                return Err(EvalError::DuplicateEntry(e.query_id.clone(), e.doc_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    /// Documents per query, best first; equal scores in ascending doc id.
    pub fn rankings(&self) -> HashMap<&str, Vec<&str>> {
        let mut by_query: HashMap<&str, Vec<(f64, &str)>> = HashMap::new();
        for e in &self.entries {
            by_query
                .entry(&e.query_id)
                .or_default()
                .push((e.score, &e.doc_id));
        }
        by_query
            .into_iter()
            .map(|(q, mut docs)| {
                docs.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
                (q, docs.into_iter().map(|d| d.1).collect())
            })
            .collect()
    }
}

/// Reads a `query_id<TAB>doc_id<TAB>score` file.
pub fn load_run(path: impl AsRef<Path>) -> Result<RunScores> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e: io::Error| EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut entries = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| EvalError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(malformed(format!("expected 3 columns, got {}", cols.len())));
        }
        let score: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad score {:?}", cols[2])))?;
        entries.push(ScoreEntry {
            query_id: cols[0].trim().to_string(),
            doc_id: cols[1].trim().to_string(),
            score,
        });
    }
    RunScores::new(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrrResult {
    pub mrr: f64,
    pub per_query: BTreeMap<String, f64>,
}

/// 1-based rank of the best-ranked positive in each judged query's ranking.
fn first_positive_ranks(
    rankings: &HashMap<&str, Vec<&str>>,
    qrels: &QrelSet,
    policy: MissingPolicy,
) -> Result<Vec<(String, Option<usize>)>> {
    let queries = qrels.query_ids();
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    queries
        .into_iter()
        .map(|q| {
            let Some(ranked) = rankings.get(q) else {
                return match policy {
                    MissingPolicy::Error => Err(EvalError::MissingQuery(q.to_string())),
                    MissingPolicy::Zero => Ok((q.to_string(), None)),
                };
            };
            let positives = qrels.positive_set(q);
            let rank = ranked.iter().position(|d| positives.contains(d)).map(|i| i + 1);
            Ok((q.to_string(), rank))
        })
        .collect()
}

fn mrr_from_ranks(ranks: &[(String, Option<usize>)], k: usize) -> MrrResult {
    let per_query: BTreeMap<String, f64> = ranks
        .iter()
        .map(|(q, r)| {
            let rr = match r {
                Some(r) if *r <= k => 1.0 / *r as f64,
                _ => 0.0,
            };
            (q.clone(), rr)
        })
        .collect();
    // qrels order, not map order, fixes the summation order
    let total: f64 = ranks.iter().map(|(q, _)| per_query[q]).sum();
    MrrResult {
        mrr: total / ranks.len() as f64,
        per_query,
    }
}

pub fn mrr_at_k(run: &RunScores, qrels: &QrelSet, k: usize, policy: MissingPolicy) -> Result<MrrResult> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let ranks = first_positive_ranks(&run.rankings(), qrels, policy)?;
    Ok(mrr_from_ranks(&ranks, k))
}

/// Splits documents at `threshold_tokens`: shorter ones are "short".
pub fn bucket_by_length(
    corpus: &DocumentSet,
    threshold_tokens: usize,
) -> (BTreeSet<String>, BTreeSet<String>) {
    corpus
        .iter()
        .map(|d| d.id.clone())
        .partition(|id| token_count(&corpus.get(id).unwrap().text) < threshold_tokens)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_queries: usize,
    pub mrr: BTreeMap<usize, f64>,
    /// Reciprocal rank per query at the largest evaluated k.
    pub per_query_rr: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket_reports: Option<BucketReports>,
    pub threshold_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReports {
    pub short: Option<Box<EvalReport>>,
    pub long: Option<Box<EvalReport>>,
}

fn report_from_ranks(ranks: &[(String, Option<usize>)], ks: &[usize], threshold: usize) -> EvalReport {
    let mut mrr = BTreeMap::new();
    let mut per_query_rr = BTreeMap::new();
    for &k in ks {
        let r = mrr_from_ranks(ranks, k);
        mrr.insert(k, r.mrr);
        per_query_rr = r.per_query;
    }
    EvalReport {
        num_queries: ranks.len(),
        mrr,
        per_query_rr,
        bucket_reports: None,
        threshold_tokens: threshold,
    }
}

/// Overall MRR at each k plus short/long sub-reports. A query belongs to the
/// bucket of its first listed positive document.
pub fn eval_report(
    run: &RunScores,
    qrels: &QrelSet,
    corpus: &DocumentSet,
    ks: &[usize],
    threshold_tokens: usize,
    policy: MissingPolicy,
) -> Result<EvalReport> {
    if ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let ranks = first_positive_ranks(&run.rankings(), qrels, policy)?;
    let mut report = report_from_ranks(&ranks, &ks, threshold_tokens);

    let (short, _) = bucket_by_length(corpus, threshold_tokens);
    let is_short = |q: &str| {
        qrels
            .positives(q)
            .next()
            .is_some_and(|d| short.contains(d))
    };
    let (short_ranks, long_ranks): (Vec<_>, Vec<_>) =
        ranks.into_iter().partition(|(q, _)| is_short(q));
    let sub = |r: Vec<(String, Option<usize>)>| {
        (!r.is_empty()).then(|| Box::new(report_from_ranks(&r, &ks, threshold_tokens)))
    };
    report.bucket_reports = Some(BucketReports {
        short: sub(short_ranks),
        long: sub(long_ranks),
    });
    Ok(report)
}

/// Aligned plain-text summary of a report.
pub fn format_table(report: &EvalReport) -> String {
    let ks: Vec<usize> = report.mrr.keys().copied().collect();
    let mut out = format!("{:<8}{:>9}", "split", "queries");
    for k in &ks {
        let _ = write!(out, "{:>10}", format!("MRR@{k}"));
    }
    out.push('\n');
    let mut row = |name: &str, r: &EvalReport| {
        let _ = write!(out, "{:<8}{:>9}", name, r.num_queries);
        for k in &ks {
            let _ = write!(out, "{:>10.4}", r.mrr.get(k).copied().unwrap_or(0.0));
        }
        out.push('\n');
    };
    row("all", report);
    if let Some(b) = &report.bucket_reports {
        if let Some(s) = &b.short {
            row("short", s);
        }
        if let Some(l) = &b.long {
            row("long", l);
        }
    }
    out
}

/// Builds a qrels subset holding only the given pairs; convenience for tests
/// and fixtures.
pub fn qrels_from(pairs: &[(&str, &str)]) -> QrelSet {
    QrelSet::from_pairs(
        pairs
            .iter()
            .map(|(q, d)| QrelPair {
                query_id: q.to_string(),
                doc_id: d.to_string(),
                grade: 1,
            })
            .collect(),
    )
    .expect("pairs are unique")
}
