//! Hard-negative selection by the dual distance criteria.
//!
//! A candidate document `D` is a hard negative for the pair `(Q, PD)` when it
//! is strictly closer to the query than the positive is,
//! `d(Q,D) < d(Q,PD)`, and strictly closer to the query than to the
//! positive, `d(Q,D) < d(PD,D)`. Passing candidates are ranked by ascending
//! `d(Q,D)` with ties broken by document id; rank 1 is the primary hard
//! negative.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QrelSet;
use crate::distance::{distance_with_norms, norm};
use crate::embed::VectorTable;
use crate::triplets::{Negative, TripletRecord, NO_CANDIDATE};

#[derive(Debug, Error, PartialEq)]
pub enum MinerError {
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("missing vectors for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingVectors(Vec<String>),
    #[error("zero vector for id {0:?}")]
    ZeroVector(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("k_negatives must be at least 1")]
    ZeroK,
}

pub type Result<T> = std::result::Result<T, MinerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceSpace {
    #[default]
    Pca,
    Concat,
}

impl fmt::Display for DistanceSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pca => "pca",
            Self::Concat => "concat",
        })
    }
}

impl FromStr for DistanceSpace {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pca" => Ok(Self::Pca),
            "concat" => Ok(Self::Concat),
            other => Err(format!("unknown distance space {other:?} (pca|concat)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub k_negatives: usize,
    /// Also drop documents that are positives for any other query.
    pub exclude_cross_query_positives: bool,
    pub distance_space: DistanceSpace,
    /// Required gap in both inequalities.
    pub epsilon: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            k_negatives: 1,
            exclude_cross_query_positives: false,
            distance_space: DistanceSpace::Pca,
            epsilon: 0.0,
        }
    }
}

/// Both selection criteria, each with an `eps` gap.
#[inline]
pub fn is_hard_negative(d_q_d: f64, d_q_pd: f64, d_pd_d: f64, eps: f64) -> bool {
    d_q_d + eps < d_q_pd && d_q_d + eps < d_pd_d
}

/// A vector with its cached L2 norm.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub values: &'a [f64],
    pub norm: f64,
}

impl<'a> Point<'a> {
    fn new(id: &str, values: &'a [f64]) -> Result<Self> {
        let n = norm(values);
        if n == 0.0 || !n.is_finite() {
            return Err(MinerError::ZeroVector(id.to_string()));
        }
        Ok(Self { values, norm: n })
    }

    fn distance(&self, other: &Point<'_>) -> f64 {
        distance_with_norms(self.values, self.norm, other.values, other.norm)
    }
}

/// Outcome of mining a single pair, before ids are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub d_q_pd: f64,
    pub negatives: Vec<Negative>,
}

fn select<'a, I>(q: Point<'_>, pd: Point<'_>, candidates: I, config: &MiningConfig) -> Selection
where
    I: Iterator<Item = (&'a str, Point<'a>)>,
{
    let d_q_pd = q.distance(&pd);
    let mut passed: Vec<(f64, f64, &str)> = candidates
        .filter_map(|(id, d)| {
            let d_q_d = q.distance(&d);
            // cheap criterion first
            if d_q_d + config.epsilon >= d_q_pd {
                return None;
            }
            let d_pd_d = pd.distance(&d);
            is_hard_negative(d_q_d, d_q_pd, d_pd_d, config.epsilon).then_some((d_q_d, d_pd_d, id))
        })
        .collect();
    let k = config.k_negatives;
    let by_distance = |a: &(f64, f64, &str), b: &(f64, f64, &str)| {
        a.0.total_cmp(&b.0).then_with(|| a.2.cmp(b.2))
    };
    if passed.len() > k {
        passed.select_nth_unstable_by(k, by_distance);
        passed.truncate(k);
    }
    passed.sort_by(by_distance);
    let negatives = passed
        .into_iter()
        .enumerate()
        .map(|(i, (d_q_d, d_pd_d, id))| Negative {
            doc_id: id.to_string(),
            d_q_d: Some(d_q_d),
            d_pd_d: Some(d_pd_d),
            rank: i + 1,
        })
        .collect();
    Selection { d_q_pd, negatives }
}

fn finish(query_id: &str, positive_id: &str, sel: Selection) -> TripletRecord {
    let no_negative = sel.negatives.is_empty().then(|| NO_CANDIDATE.to_string());
    TripletRecord {
        query_id: query_id.to_string(),
        positive_id: positive_id.to_string(),
        d_q_pd: Some(sel.d_q_pd),
        negatives: sel.negatives,
        no_negative,
    }
}

/// Mines up to `k_negatives` hard negatives for one `(Q, PD)` pair from an
/// exhaustive scan of `candidates`. The caller is responsible for excluding
/// the query's positives from the candidate list.
pub fn mine_for_pair(
    query: (&str, &[f64]),
    positive: (&str, &[f64]),
    candidates: &[(&str, &[f64])],
    config: &MiningConfig,
) -> Result<TripletRecord> {
    if config.k_negatives == 0 {
        return Err(MinerError::ZeroK);
    }
    if candidates.is_empty() {
        return Err(MinerError::NoCandidates);
    }
    if query.1.len() != positive.1.len() {
        return Err(MinerError::DimMismatch(query.1.len(), positive.1.len()));
    }
    let q = Point::new(query.0, query.1)?;
    let pd = Point::new(positive.0, positive.1)?;
    let points = candidates
        .iter()
        .map(|&(id, v)| {
            if v.len() != q.values.len() {
                return Err(MinerError::DimMismatch(q.values.len(), v.len()));
            }
            Ok((id, Point::new(id, v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let sel = select(q, pd, points.into_iter(), config);
    Ok(finish(query.0, positive.0, sel))
}

/// Mines every qrel pair against the whole document table.
///
/// `queries` and `docs` must live in the same vector space. Output follows
/// qrels order regardless of how pairs were scheduled.
pub fn mine_all(
    qrels: &QrelSet,
    queries: &VectorTable,
    docs: &VectorTable,
    config: &MiningConfig,
) -> Result<Vec<TripletRecord>> {
    if config.k_negatives == 0 {
        return Err(MinerError::ZeroK);
    }
    if queries.dim() != docs.dim() {
        return Err(MinerError::DimMismatch(queries.dim(), docs.dim()));
    }
    let mut missing = Vec::new();
    let mut seen = HashSet::new();
    for p in qrels.pairs() {
        if queries.position(&p.query_id).is_none() && seen.insert(p.query_id.as_str()) {
            missing.push(p.query_id.clone());
        }
        if docs.position(&p.doc_id).is_none() && seen.insert(p.doc_id.as_str()) {
            missing.push(p.doc_id.clone());
        }
    }
    if !missing.is_empty() {
        return Err(MinerError::MissingVectors(missing));
    }

    let doc_points = docs
        .iter()
        .map(|(id, v)| Point::new(id, v))
        .collect::<Result<Vec<_>>>()?;
    let global_positives = config
        .exclude_cross_query_positives
        .then(|| qrels.all_positive_docs());

    qrels
        .pairs()
        .par_iter()
        .map(|pair| {
            let q = Point::new(&pair.query_id, queries.get(&pair.query_id).unwrap())?;
            let pos_idx = docs.position(&pair.doc_id).unwrap();
            let pd = doc_points[pos_idx];
            let own = qrels.positive_set(&pair.query_id);
            let mut candidates = docs
                .ids()
                .iter()
                .zip(&doc_points)
                .filter(|(id, _)| {
                    !own.contains(id.as_str())
                        && global_positives
                            .as_ref()
                            .is_none_or(|g| !g.contains(id.as_str()))
                })
                .map(|(id, p)| (id.as_str(), *p))
                .peekable();
            if candidates.peek().is_none() {
                return Err(MinerError::NoCandidates);
            }
            let sel = select(q, pd, candidates, config);
            Ok(finish(&pair.query_id, &pair.doc_id, sel))
        })
        .collect()
}
