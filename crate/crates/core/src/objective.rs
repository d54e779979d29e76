//! Triplet margin loss over query/positive/hard-negative distances.
//!
//! Per triplet, `max(0, m + d(Q,PD) − d(Q,HN))`. Bi-encoders use the cosine
//! distance of their embeddings; cross-encoders use the negated relevance
//! score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{cosine_distance, dot, norm, DistanceError};

pub const DEFAULT_MARGIN: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("margin must be nonnegative, got {0}")]
    NegativeMargin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    BiEncoderCosine,
    CrossEncoderScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    pub metric: Metric,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            metric: Metric::BiEncoderCosine,
        }
    }
}

pub fn bi_encoder_distance(e_q: &[f64], e_d: &[f64]) -> Result<f64, ObjectiveError> {
    Ok(cosine_distance(e_q, e_d)?)
}

pub fn cross_encoder_distance(score: f64) -> f64 {
    -score
}

pub fn triplet_loss(d_q_pd: f64, d_q_hn: f64, margin: f64) -> f64 {
    (margin + d_q_pd - d_q_hn).max(0.0)
}

/// Kahan-compensated sum of per-triplet losses, or their mean.
pub fn batch_loss(
    triplets: impl IntoIterator<Item = (f64, f64)>,
    margin: f64,
    reduction: Reduction,
) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    let mut n = 0usize;
    for (d_pos, d_neg) in triplets {
        let y = triplet_loss(d_pos, d_neg, margin) - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
        n += 1;
    }
    match reduction {
        Reduction::Sum => sum,
        Reduction::Mean if n == 0 => 0.0,
        Reduction::Mean => sum / n as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// ∂cos(a,b)/∂a = b/(|a||b|) − cos(a,b)·a/|a|².
fn cos_grad(a: &[f64], b: &[f64], na: f64, nb: f64, cos: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(ai, bi)| bi / (na * nb) - cos * ai / (na * na))
        .collect()
}

/// Loss and analytic gradients of the bi-encoder triplet loss with respect
/// to the three embeddings. At or below the hinge (loss 0) all gradients are
/// zero.
pub fn triplet_loss_grad(
    e_q: &[f64],
    e_pd: &[f64],
    e_hn: &[f64],
    margin: f64,
) -> Result<TripletGrad, ObjectiveError> {
    if margin < 0.0 {
        return Err(ObjectiveError::NegativeMargin(margin));
    }
    for v in [e_pd, e_hn] {
        if v.len() != e_q.len() {
            return Err(DistanceError::DimMismatch(e_q.len(), v.len()).into());
        }
    }
    let (nq, np, nn) = (norm(e_q), norm(e_pd), norm(e_hn));
    if nq == 0.0 || np == 0.0 || nn == 0.0 {
        return Err(DistanceError::ZeroVector.into());
    }
    let cos_qp = dot(e_q, e_pd) / (nq * np);
    let cos_qn = dot(e_q, e_hn) / (nq * nn);
    let loss = triplet_loss(1.0 - cos_qp, 1.0 - cos_qn, margin);
    let dim = e_q.len();
    if loss <= 0.0 {
        return Ok(TripletGrad {
            loss: 0.0,
            query: vec![0.0; dim],
            positive: vec![0.0; dim],
            negative: vec![0.0; dim],
        });
    }
    // L = m − cos(q,p) + cos(q,n)
    let gq_p = cos_grad(e_q, e_pd, nq, np, cos_qp);
    let gq_n = cos_grad(e_q, e_hn, nq, nn, cos_qn);
    let query = gq_p.iter().zip(&gq_n).map(|(p, n)| n - p).collect();
    let positive = cos_grad(e_pd, e_q, np, nq, cos_qp)
        .into_iter()
        .map(|g| -g)
        .collect();
    let negative = cos_grad(e_hn, e_q, nn, nq, cos_qn);
    Ok(TripletGrad {
        loss,
        query,
        positive,
        negative,
    })
}
