//! Corpus, query and relevance-judgment loading, tokenization and length
//! statistics.
//!
//! Documents and queries are JSON-Lines records with `"id"`, `"text"` and an
//! optional flat `"meta"` object of strings. Relevance judgments (qrels) are a
//! headerless TSV of `query_id`, `doc_id` and an optional integer grade.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: unknown {kind} id {id:?}")]
    UnknownId {
        path: PathBuf,
        line: usize,
        kind: &'static str,
        id: String,
    },
    #[error("{path}:{line}: duplicate judgment ({query_id:?}, {doc_id:?})")]
    DuplicatePair {
        path: PathBuf,
        line: usize,
        query_id: String,
        doc_id: String,
    },
    #[error("{path}:{line}: grade {value:?} is not a positive integer")]
    BadGrade {
        path: PathBuf,
        line: usize,
        value: String,
    },
    #[error("bucket edges must be strictly ascending")]
    BadEdges,
    #[error("no records to summarize")]
    Empty,
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// A corpus document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

/// A query. Shares the document record layout; `meta` is accepted and dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept documents whose text is the empty string.
    pub allow_empty_text: bool,
}

/// Ordered, id-unique collection of records with O(1) lookup by id.
#[derive(Debug, Clone)]
pub struct RecordSet<T> {
    records: Vec<T>,
    index: HashMap<String, usize>,
}

pub type DocumentSet = RecordSet<Document>;
pub type QuerySet = RecordSet<Query>;

/// Anything with an id and a text body.
pub trait TextRecord {
    fn id(&self) -> &str;
    fn text(&self) -> &str;
}

impl TextRecord for Document {
    fn id(&self) -> &str {
        &self.id
    }
    fn text(&self) -> &str {
        &self.text
    }
}

impl TextRecord for Query {
    fn id(&self) -> &str {
        &self.id
    }
    fn text(&self) -> &str {
        &self.text
    }
}

impl<T: TextRecord> RecordSet<T> {
    /// Builds a set, failing on the first repeated id. `line` in the error is
    /// the 1-based position of the offending record.
    pub fn from_records(records: Vec<T>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.id().to_string(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    path: PathBuf::from("<memory>"),
                    line: i + 1,
                    id: r.id().to_string(),
                });
            }
        }
        Ok(Self { records, index })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.records.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id())
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.text())
    }

    pub fn records(&self) -> &[T] {
        &self.records
    }
}

impl<'a, T> IntoIterator for &'a RecordSet<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;
    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
    #[serde(default)]
    meta: Option<BTreeMap<String, String>>,
}

fn parse_jsonl(path: &Path, require_text: bool) -> Result<Vec<(usize, Document)>> {
    let content = read_to_string(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        let id = raw.id.ok_or_else(|| malformed("missing field \"id\"".into()))?;
        let text = raw
            .text
            .ok_or_else(|| malformed("missing field \"text\"".into()))?;
        if id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        if require_text && text.is_empty() {
            return Err(malformed(format!("empty text for id {id:?}")));
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line: lineno,
                id,
            });
        }
        out.push((
            lineno,
            Document {
                id,
                text,
                meta: raw.meta,
            },
        ));
    }
    Ok(out)
}

/// Loads a JSON-Lines document file, preserving file order.
pub fn load_documents(path: impl AsRef<Path>) -> Result<DocumentSet> {
    load_documents_with(path, LoadOptions::default())
}

pub fn load_documents_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<DocumentSet> {
    let docs = parse_jsonl(path.as_ref(), !opts.allow_empty_text)?;
    let records: Vec<Document> = docs.into_iter().map(|(_, d)| d).collect();
    let index = records
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.clone(), i))
        .collect();
    Ok(RecordSet { records, index })
}

/// Loads a JSON-Lines query file. Query text must be nonempty.
pub fn load_queries(path: impl AsRef<Path>) -> Result<QuerySet> {
    let docs = parse_jsonl(path.as_ref(), true)?;
    let records: Vec<Query> = docs
        .into_iter()
        .map(|(_, d)| Query {
            id: d.id,
            text: d.text,
        })
        .collect();
    let index = records
        .iter()
        .enumerate()
        .map(|(i, q)| (q.id.clone(), i))
        .collect();
    Ok(RecordSet { records, index })
}

/// Writes records back out as JSON-Lines.
pub fn write_jsonl<T: Serialize>(records: &[T], mut w: impl Write) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelPair {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u32,
}

/// Validated relevance judgments in file order.
#[derive(Debug, Clone, Default)]
pub struct QrelSet {
    pairs: Vec<QrelPair>,
    by_query: HashMap<String, Vec<usize>>,
}

impl QrelSet {
    /// Builds a set from pairs, rejecting duplicate (query, doc) pairs.
    pub fn from_pairs(pairs: Vec<QrelPair>) -> Result<Self> {
        let mut set = QrelSet::default();
        let mut seen = HashSet::new();
        for (i, p) in pairs.into_iter().enumerate() {
            if !seen.insert((p.query_id.clone(), p.doc_id.clone())) {
                return Err(CorpusError::DuplicatePair {
                    path: PathBuf::from("<memory>"),
                    line: i + 1,
                    query_id: p.query_id,
                    doc_id: p.doc_id,
                });
            }
            set.push(p);
        }
        Ok(set)
    }

    fn push(&mut self, p: QrelPair) {
        self.by_query
            .entry(p.query_id.clone())
            .or_default()
            .push(self.pairs.len());
        self.pairs.push(p);
    }

    pub fn pairs(&self) -> &[QrelPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Positive documents (grade ≥ 1) for a query, in file order.
    pub fn positives(&self, query_id: &str) -> impl Iterator<Item = &str> {
        self.by_query
            .get(query_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.pairs[i])
            .filter(|p| p.grade >= 1)
            .map(|p| p.doc_id.as_str())
    }

    pub fn positive_set(&self, query_id: &str) -> HashSet<&str> {
        self.positives(query_id).collect()
    }

    pub fn is_positive(&self, query_id: &str, doc_id: &str) -> bool {
        self.positives(query_id).any(|d| d == doc_id)
    }

    /// Query ids in order of first appearance.
    pub fn query_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pairs
            .iter()
            .map(|p| p.query_id.as_str())
            .filter(|q| seen.insert(*q))
            .collect()
    }

    /// Every document that is a positive for some query.
    pub fn all_positive_docs(&self) -> HashSet<&str> {
        self.pairs
            .iter()
            .filter(|p| p.grade >= 1)
            .map(|p| p.doc_id.as_str())
            .collect()
    }
}

/// Loads a qrels TSV and validates every id against the given sets.
pub fn load_qrels(
    path: impl AsRef<Path>,
    queries: &QuerySet,
    docs: &DocumentSet,
) -> Result<QrelSet> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    let mut set = QrelSet::default();
    let mut seen = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected 2 or 3 tab-separated columns, got {}", cols.len()),
            });
        }
        let (query_id, doc_id) = (cols[0].trim(), cols[1].trim());
        let grade = match cols.get(2).map(|s| s.trim()) {
            None | Some("") => 1,
            Some(g) => match g.parse::<u32>() {
                Ok(v) if v >= 1 => v,
                _ => {
                    return Err(CorpusError::BadGrade {
                        path: path.to_path_buf(),
                        line: lineno,
                        value: g.to_string(),
                    })
                }
            },
        };
        if !queries.contains(query_id) {
            return Err(CorpusError::UnknownId {
                path: path.to_path_buf(),
                line: lineno,
                kind: "query",
                id: query_id.to_string(),
            });
        }
        if !docs.contains(doc_id) {
            return Err(CorpusError::UnknownId {
                path: path.to_path_buf(),
                line: lineno,
                kind: "document",
                id: doc_id.to_string(),
            });
        }
        if !seen.insert((query_id.to_string(), doc_id.to_string())) {
            return Err(CorpusError::DuplicatePair {
                path: path.to_path_buf(),
                line: lineno,
                query_id: query_id.to_string(),
                doc_id: doc_id.to_string(),
            });
        }
        set.push(QrelPair {
            query_id: query_id.to_string(),
            doc_id: doc_id.to_string(),
            grade,
        });
    }
    Ok(set)
}

/// Lowercased maximal runs of Unicode alphanumerics.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn token_count(text: &str) -> usize {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .count()
}

/// Token-length histogram. `counts[i]` holds lengths in
/// `[bucket_edges[i-1], bucket_edges[i])`, with open-ended first and last
/// buckets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthHistogram {
    pub unit: &'static str,
    pub bucket_edges: Vec<usize>,
    pub counts: Vec<usize>,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: f64,
}

impl LengthHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Tab-separated `lo  hi  count` rows (hi exclusive, `inf` for the last).
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("lo\thi\tcount\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = if i == 0 { 0 } else { self.bucket_edges[i - 1] };
            let hi = self
                .bucket_edges
                .get(i)
                .map(|e| e.to_string())
                .unwrap_or_else(|| "inf".into());
            s.push_str(&format!("{lo}\t{hi}\t{c}\n"));
        }
        s
    }
}

pub fn length_stats<'a, T, I>(records: I, bucket_edges: &[usize]) -> Result<LengthHistogram>
where
    T: TextRecord + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let lengths: Vec<usize> = records.into_iter().map(|r| token_count(r.text())).collect();
    histogram(&lengths, bucket_edges)
}

pub fn histogram(lengths: &[usize], bucket_edges: &[usize]) -> Result<LengthHistogram> {
    if bucket_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CorpusError::BadEdges);
    }
    if lengths.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts = vec![0usize; bucket_edges.len() + 1];
    for &len in lengths {
        // number of edges <= len
        let bucket = bucket_edges.partition_point(|&e| e <= len);
        counts[bucket] += 1;
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Ok(LengthHistogram {
        unit: "tokens",
        bucket_edges: bucket_edges.to_vec(),
        counts,
        min: sorted[0],
        max: sorted[n - 1],
        mean: sorted.iter().sum::<usize>() as f64 / n as f64,
        median,
    })
}
