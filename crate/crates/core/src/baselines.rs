//! Comparison negative samplers: uniform random, BM25 and in-batch.
//!
//! All samplers emit [`TripletRecord`]s with the distance fields left empty,
//! and none of them ever returns a document that is a positive for the same
//! query.

use std::collections::{HashMap, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, DocumentSet, QrelPair, QrelSet, QuerySet};
use crate::triplets::TripletRecord;

/// Reason recorded when BM25 finds fewer than `k` scoring documents.
pub const FEW_LEXICAL_MATCHES: &str = "fewer-than-k-lexical-matches";

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("query {query_id:?} has {eligible} eligible candidates, fewer than k={k}")]
    TooFewCandidates {
        query_id: String,
        eligible: usize,
        k: usize,
    },
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("unknown document id {0:?}")]
    UnknownDoc(String),
    #[error("unknown query id {0:?}")]
    UnknownQuery(String),
    #[error("in-batch sampling needs at least 2 pairs per batch, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid BM25 parameters k1={k1}, b={b}")]
    BadParams { k1: f64, b: f64 },
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// `k` uniform negatives per pair, drawn without replacement from the corpus
/// minus the query's positives. The whole output is a function of `seed`.
pub fn sample_random(
    qrels: &QrelSet,
    corpus_ids: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<TripletRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    qrels
        .pairs()
        .iter()
        .map(|pair| {
            let positives = qrels.positive_set(&pair.query_id);
            let eligible: Vec<&str> = corpus_ids
                .iter()
                .map(String::as_str)
                .filter(|id| !positives.contains(id))
                .collect();
            if eligible.len() < k {
                return Err(BaselineError::TooFewCandidates {
                    query_id: pair.query_id.clone(),
                    eligible: eligible.len(),
                    k,
                });
            }
            let picks = index::sample(&mut rng, eligible.len(), k);
            Ok(TripletRecord::from_ids(
                &pair.query_id,
                &pair.doc_id,
                picks.iter().map(|i| eligible[i]),
            ))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(())
        } else {
            Err(BaselineError::BadParams {
                k1: self.k1,
                b: self.b,
            })
        }
    }
}

/// Inverted index over the tokenized corpus.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    doc_lengths: Vec<usize>,
    avg_doc_len: f64,
    /// term → (document position, term frequency), ascending by position.
    postings: HashMap<String, Vec<(usize, u32)>>,
}

pub fn build_bm25_index(corpus: &DocumentSet) -> Result<Bm25Index> {
    Bm25Index::build(corpus.iter().map(|d| (d.id.as_str(), d.text.as_str())))
}

impl Bm25Index {
    pub fn build<'a, I>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut ids = Vec::new();
        let mut doc_lengths = Vec::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (pos, (id, text)) in docs.into_iter().enumerate() {
            let tokens = tokenize(text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pos, count));
            }
            ids.push(id.to_string());
            doc_lengths.push(tokens.len());
        }
        if ids.is_empty() {
            return Err(BaselineError::EmptyCorpus);
        }
        let avg_doc_len = doc_lengths.iter().sum::<usize>() as f64 / ids.len() as f64;
        let positions = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Ok(Self {
            ids,
            positions,
            doc_lengths,
            avg_doc_len,
            postings,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).map(|&p| self.doc_lengths[p])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// `(doc_id, tf)` postings of a term.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .into_iter()
            .flatten()
            .map(|&(p, tf)| (self.ids[p].as_str(), tf))
            .collect()
    }

    pub fn term_freq(&self, term: &str, doc_id: &str) -> u32 {
        let Some(&pos) = self.positions.get(doc_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|list| {
                list.binary_search_by_key(&pos, |&(p, _)| p)
                    .ok()
                    .map(|i| list[i].1)
            })
            .unwrap_or(0)
    }

    /// `ln((N − df + 0.5)/(df + 0.5) + 1)`; never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, params: &Bm25Params, idf: f64, tf: u32, len: usize) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - params.b + params.b * len as f64 / self.avg_doc_len;
        idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    }

    /// Scores every document at once, indexed by position.
    pub fn score_all(&self, params: &Bm25Params, query_tokens: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.num_docs()];
        for term in query_tokens {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(pos, tf) in list {
                scores[pos] += self.term_weight(params, idf, tf, self.doc_lengths[pos]);
            }
        }
        scores
    }
}

pub fn bm25_score(
    index: &Bm25Index,
    params: &Bm25Params,
    query_tokens: &[String],
    doc_id: &str,
) -> Result<f64> {
    let pos = *index
        .positions
        .get(doc_id)
        .ok_or_else(|| BaselineError::UnknownDoc(doc_id.to_string()))?;
    let len = index.doc_lengths[pos];
    Ok(query_tokens
        .iter()
        .map(|t| match index.term_freq(t, doc_id) {
            0 => 0.0,
            tf => index.term_weight(params, index.idf(t), tf, len),
        })
        .sum())
}

/// Top-`k` BM25 documents per pair, skipping the query's positives and
/// documents with zero score. Equal scores fall back to ascending doc id.
pub fn sample_bm25(
    qrels: &QrelSet,
    queries: &QuerySet,
    index: &Bm25Index,
    params: &Bm25Params,
    k: usize,
) -> Result<Vec<TripletRecord>> {
    params.validate()?;
    qrels
        .pairs()
        .par_iter()
        .map(|pair| {
            let query = queries
                .get(&pair.query_id)
                .ok_or_else(|| BaselineError::UnknownQuery(pair.query_id.clone()))?;
            let scores = index.score_all(params, &tokenize(&query.text));
            let positives = qrels.positive_set(&pair.query_id);
            let mut ranked: Vec<(f64, &str)> = scores
                .iter()
                .zip(index.ids())
                .filter(|(&s, id)| s > 0.0 && !positives.contains(id.as_str()))
                .map(|(&s, id)| (s, id.as_str()))
                .collect();
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            ranked.truncate(k);
            let short = ranked.len() < k;
            let mut rec =
                TripletRecord::from_ids(&pair.query_id, &pair.doc_id, ranked.into_iter().map(|r| r.1));
            if short {
                rec.no_negative = Some(FEW_LEXICAL_MATCHES.to_string());
            }
            Ok(rec)
        })
        .collect()
}

/// For each pair in the batch, the other pairs' positives, minus anything
/// that is a positive for the pair's own query.
pub fn sample_in_batch(batch: &[QrelPair], qrels: &QrelSet) -> Result<Vec<TripletRecord>> {
    if batch.len() < 2 {
        return Err(BaselineError::BatchTooSmall(batch.len()));
    }
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let mut own: HashSet<&str> = qrels.positive_set(&pair.query_id);
            own.extend(
                batch
                    .iter()
                    .filter(|p| p.query_id == pair.query_id)
                    .map(|p| p.doc_id.as_str()),
            );
            let mut seen = HashSet::new();
            let ids = batch
                .iter()
                .enumerate()
                .filter(|&(j, p)| j != i && !own.contains(p.doc_id.as_str()))
                .map(|(_, p)| p.doc_id.as_str())
                .filter(|id| seen.insert(*id));
            TripletRecord::from_ids(&pair.query_id, &pair.doc_id, ids)
        })
        .collect())
}

/// In-batch sampling over consecutive qrels batches of `batch_size`. A
/// trailing batch of one pair is folded into the previous batch.
pub fn sample_in_batch_all(qrels: &QrelSet, batch_size: usize) -> Result<Vec<TripletRecord>> {
    let pairs = qrels.pairs();
    let size = batch_size.max(2);
    let mut bounds: Vec<(usize, usize)> = (0..pairs.len())
        .step_by(size)
        .map(|s| (s, (s + size).min(pairs.len())))
        .collect();
    if bounds.len() > 1 && bounds.last().is_some_and(|(s, e)| e - s == 1) {
        let (_, end) = bounds.pop().unwrap();
        bounds.last_mut().unwrap().1 = end;
    }
    if bounds.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (s, e) in bounds {
        out.extend(sample_in_batch(&pairs[s..e], qrels)?);
    }
    Ok(out)
}

fn take_unique<'a>(
    it: &mut impl Iterator<Item = &'a str>,
    ids: &mut Vec<&'a str>,
    seen: &mut HashSet<&'a str>,
    limit: usize,
) {
    while ids.len() < limit {
        let Some(id) = it.next() else { break };
        if seen.insert(id) {
            ids.push(id);
        }
    }
}

/// Merges two samplers' outputs pair by pair, taking roughly
/// `k · first_weight / (first_weight + second_weight)` from `first` and filling
/// the rest from `second`, then from whichever list still has entries.
pub fn combine(
    first: &[TripletRecord],
    second: &[TripletRecord],
    k: usize,
    first_weight: u32,
    second_weight: u32,
) -> Vec<TripletRecord> {
    let total = (first_weight + second_weight).max(1) as f64;
    let quota = ((k as f64) * first_weight as f64 / total).round() as usize;
    first
        .iter()
        .zip(second)
        .map(|(a, b)| {
            debug_assert_eq!((&a.query_id, &a.positive_id), (&b.query_id, &b.positive_id));
            let mut seen = HashSet::new();
            let mut ids: Vec<&str> = Vec::with_capacity(k);
            let mut ia = a.negative_ids();
            let mut ib = b.negative_ids();
            take_unique(&mut ia, &mut ids, &mut seen, quota.min(k));
            take_unique(&mut ib, &mut ids, &mut seen, k);
            take_unique(&mut ia, &mut ids, &mut seen, k);
            let mut rec = TripletRecord::from_ids(&a.query_id, &a.positive_id, ids);
            if rec.negatives.len() < k {
                rec.no_negative = a.no_negative.clone().or_else(|| b.no_negative.clone());
            }
            rec
        })
        .collect()
}
