//! Independent re-check of a triplet file against stored vectors.
//!
//! Every negative's three distances are recomputed from scratch and checked
//! against both selection criteria, the recorded values, ordering, ranks and
//! positive exclusion.

use serde::Serialize;

use crate::corpus::QrelSet;
use crate::distance::cosine_distance;
use crate::embed::VectorTable;
use crate::triplets::TripletRecord;

/// Largest tolerated gap between a recorded and a recomputed distance.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// 1-based line in the triplet file.
    pub line: usize,
    pub query_id: String,
    pub doc_id: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Drift {
    pub line: usize,
    pub doc_id: String,
    pub field: &'static str,
    pub recorded: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub triplets: usize,
    pub negatives: usize,
    pub violations: Vec<Violation>,
    pub drift: Vec<Drift>,
    pub max_drift: f64,
    pub unresolved_ids: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.drift.is_empty() && self.unresolved_ids.is_empty()
    }
}

impl VerifyReport {
    fn unresolved(&mut self, id: &str) {
        if !self.unresolved_ids.iter().any(|u| u == id) {
            self.unresolved_ids.push(id.to_string());
        }
    }

    fn check_drift(&mut self, line: usize, doc_id: &str, field: &'static str, recorded: Option<f64>, recomputed: f64) {
        let Some(recorded) = recorded else {
            return;
        };
        let gap = (recorded - recomputed).abs();
        let gap = if gap.is_nan() { f64::INFINITY } else { gap };
        self.max_drift = self.max_drift.max(gap);
        if gap > DRIFT_TOLERANCE {
            self.drift.push(Drift {
                line,
                doc_id: doc_id.to_string(),
                field,
                recorded,
                recomputed,
            });
        }
    }

    fn violate(&mut self, line: usize, rec: &TripletRecord, doc_id: &str, kind: String) {
        self.violations.push(Violation {
            line,
            query_id: rec.query_id.clone(),
            doc_id: doc_id.to_string(),
            kind,
        });
    }
}

/// Checks `records` in the space spanned by `queries` and `docs`.
pub fn verify(
    records: &[TripletRecord],
    queries: &VectorTable,
    docs: &VectorTable,
    qrels: Option<&QrelSet>,
    epsilon: f64,
) -> VerifyReport {
    let mut report = VerifyReport {
        triplets: records.len(),
        ..Default::default()
    };
    for (i, rec) in records.iter().enumerate() {
        let line = i + 1;
        let q = queries.get(&rec.query_id);
        let pd = docs.get(&rec.positive_id);
        if q.is_none() {
            report.unresolved(&rec.query_id);
        }
        if pd.is_none() {
            report.unresolved(&rec.positive_id);
        }
        let (Some(q), Some(pd)) = (q, pd) else {
            continue;
        };
        let d_q_pd = cosine_distance(q, pd).unwrap_or(f64::NAN);
        report.check_drift(line, &rec.positive_id, "d_q_pd", rec.d_q_pd, d_q_pd);

        let mut prev: Option<(f64, &str)> = None;
        for (j, neg) in rec.negatives.iter().enumerate() {
            report.negatives += 1;
            if neg.rank != j + 1 {
                report.violate(line, rec, &neg.doc_id, format!("rank {} at position {}", neg.rank, j + 1));
            }
            let is_positive = neg.doc_id == rec.positive_id
                || qrels.is_some_and(|q| q.is_positive(&rec.query_id, &neg.doc_id));
            if is_positive {
                report.violate(line, rec, &neg.doc_id, "negative is a positive for this query".into());
            }
            let Some(d) = docs.get(&neg.doc_id) else {
                report.unresolved(&neg.doc_id);
                continue;
            };
            let d_q_d = cosine_distance(q, d).unwrap_or(f64::NAN);
            let d_pd_d = cosine_distance(pd, d).unwrap_or(f64::NAN);
            report.check_drift(line, &neg.doc_id, "d_q_d", neg.d_q_d, d_q_d);
            report.check_drift(line, &neg.doc_id, "d_pd_d", neg.d_pd_d, d_pd_d);
            if !(d_q_d + epsilon < d_q_pd) {
                report.violate(line, rec, &neg.doc_id, format!("d(Q,D)={d_q_d} not below d(Q,PD)={d_q_pd}"));
            }
            if !(d_q_d + epsilon < d_pd_d) {
                report.violate(line, rec, &neg.doc_id, format!("d(Q,D)={d_q_d} not below d(PD,D)={d_pd_d}"));
            }
            if let Some((d_prev, id_prev)) = prev {
                if (d_q_d, neg.doc_id.as_str()) < (d_prev, id_prev) {
                    report.violate(line, rec, &neg.doc_id, "negatives not sorted by d(Q,D)".into());
                }
            }
            prev = Some((d_q_d, &neg.doc_id));
        }
    }
    report
}
