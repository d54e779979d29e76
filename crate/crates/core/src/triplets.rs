//! Triplet records shared by the miner and the baseline samplers, and their
//! JSON-Lines file format.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic;

/// Reason recorded when the miner finds no admissible candidate.
pub const NO_CANDIDATE: &str = "no-candidate-satisfied-criteria";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Negative {
    pub doc_id: String,
    /// d(Q, D); absent for samplers that do not compute distances.
    pub d_q_d: Option<f64>,
    /// d(PD, D).
    pub d_pd_d: Option<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub query_id: String,
    pub positive_id: String,
    pub d_q_pd: Option<f64>,
    pub negatives: Vec<Negative>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_negative: Option<String>,
}

impl TripletRecord {
    /// A record with the given negative ids ranked in order and no distances.
    pub fn from_ids<I, S>(query_id: &str, positive_id: &str, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let negatives = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| Negative {
                doc_id: id.into(),
                d_q_d: None,
                d_pd_d: None,
                rank: i + 1,
            })
            .collect();
        Self {
            query_id: query_id.to_string(),
            positive_id: positive_id.to_string(),
            d_q_pd: None,
            negatives,
            no_negative: None,
        }
    }

    pub fn negative_ids(&self) -> impl Iterator<Item = &str> {
        self.negatives.iter().map(|n| n.doc_id.as_str())
    }
}

/// Sidecar metadata stored next to a triplet file as `<file>.meta.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripletMeta {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_space: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_negatives: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_variance_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Margin intended for the triplet loss downstream.
    pub margin: f64,
}

#[derive(Debug, Error)]
pub enum TripletError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_records<W: Write>(records: &[TripletRecord], mut w: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Atomically writes the triplet file and, if given, its metadata sidecar.
pub fn write_triplets(
    path: &Path,
    records: &[TripletRecord],
    meta: Option<&TripletMeta>,
) -> Result<(), TripletError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TripletError::Io { path, source }
    };
    if let Some(meta) = meta {
        let mp = meta_path(path);
        let json = serde_json::to_vec_pretty(meta).expect("meta serializes");
        atomic::write_bytes(&mp, &json).map_err(io_err(&mp))?;
    }
    atomic::write_file(path, |w| write_records(records, w)).map_err(io_err(path))
}

pub fn read_triplets(path: &Path) -> Result<Vec<TripletRecord>, TripletError> {
    let content = fs::read_to_string(path).map_err(|source| TripletError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TripletError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_meta(path: &Path) -> Option<TripletMeta> {
    let bytes = fs::read(meta_path(path)).ok()?;
    serde_json::from_slice(&bytes).ok()
}
