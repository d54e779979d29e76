//! Per-model embedding stores, normalization and ensemble concatenation.
//!
//! A store holds one model's vectors for an ordered list of ids. On disk it is
//! a directory with `manifest.json`, `ids.txt` (one id per line) and
//! `matrix.f32` (row-major little-endian `f32`, `count × dim` values).

mod provider;

pub use provider::{fetch_embeddings, ProviderSpec};

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic;

/// Tolerance on row norms of a normalized store.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("manifest count {manifest} disagrees with {what} ({actual})")]
    CountMismatch {
        what: &'static str,
        manifest: usize,
        actual: usize,
    },
    #[error("matrix file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("checksum mismatch: manifest {expected}, computed {actual}")]
    Checksum { expected: String, actual: String },
    #[error("duplicate id {0:?} in store")]
    DuplicateId(String),
    #[error("non-finite value in row {row} ({id:?})")]
    NonFinite { row: usize, id: String },
    #[error("row {row} ({id:?}) has norm {norm} but store is marked normalized")]
    NotNormalized { row: usize, id: String, norm: f64 },
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("id {id:?} missing from store {model:?}")]
    MissingId { model: String, id: String },
    #[error("store order changed within a run: expected {expected:?}, got {actual:?}")]
    LayoutChanged {
        expected: Vec<String>,
        actual: Vec<String>,
    },
    #[error("no stores to concatenate")]
    NoStores,
    #[error("provider: {0}")]
    Provider(String),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// One model's embeddings, id-aligned with the inputs they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    model_name: String,
    dim: usize,
    normalized: bool,
    ids: Vec<String>,
    matrix: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// Builds and validates a store. `matrix` is row-major `ids.len() × dim`.
    pub fn new(
        model_name: impl Into<String>,
        dim: usize,
        ids: Vec<String>,
        matrix: Vec<f32>,
        normalized: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::DimMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if matrix.len() != ids.len() * dim {
            return Err(EmbedError::CountMismatch {
                what: "matrix values",
                manifest: ids.len() * dim,
                actual: matrix.len(),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbedError::DuplicateId(id.clone()));
            }
        }
        let store = Self {
            model_name: model_name.into(),
            dim,
            normalized,
            ids,
            matrix,
            index,
        };
        store.validate_rows()?;
        Ok(store)
    }

    fn validate_rows(&self) -> Result<()> {
        for (row, id) in self.ids.iter().enumerate() {
            let r = self.row(row);
            if r.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::NonFinite {
                    row,
                    id: id.clone(),
                });
            }
            if self.normalized {
                let norm = norm_f32(r);
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(EmbedError::NotNormalized {
                        row,
                        id: id.clone(),
                        norm,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    /// Returns a copy with every row scaled to unit L2 norm.
    pub fn normalized(&self) -> Result<Self> {
        let mut matrix = Vec::with_capacity(self.matrix.len());
        for i in 0..self.count() {
            let r: Vec<f64> = self.row(i).iter().map(|&v| v as f64).collect();
            matrix.extend(l2_normalize(&r)?.into_iter().map(|v| v as f32));
        }
        Self::new(
            self.model_name.clone(),
            self.dim,
            self.ids.clone(),
            matrix,
            true,
        )
    }

    /// Concatenates two stores of the same model (e.g. documents then queries).
    pub fn append(&self, other: &EmbeddingStore) -> Result<Self> {
        if other.dim != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut ids = self.ids.clone();
        ids.extend(other.ids.iter().cloned());
        let mut matrix = self.matrix.clone();
        matrix.extend_from_slice(&other.matrix);
        Self::new(
            self.model_name.clone(),
            self.dim,
            ids,
            matrix,
            self.normalized && other.normalized,
        )
    }

    /// Hex CRC32 of the little-endian matrix bytes.
    pub fn checksum(&self) -> String {
        format!("{:08x}", crc32fast::hash(&matrix_bytes(&self.matrix)))
    }
}

fn norm_f32(r: &[f32]) -> f64 {
    r.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
}

fn matrix_bytes(m: &[f32]) -> Vec<u8> {
    m.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Scales `v` to unit L2 norm.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbedError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    model_name: String,
    dim: usize,
    count: usize,
    normalized: bool,
    checksum: String,
}

const MANIFEST: &str = "manifest.json";
const IDS: &str = "ids.txt";
const MATRIX: &str = "matrix.f32";

/// Writes `store` into `dir`, replacing any previous store there. Files are
/// staged in a sibling directory and moved into place once complete.
pub fn write_store(store: &EmbeddingStore, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EmbedError::Io { path, source }
    };
    atomic::write_dir(dir, |staging| {
        let manifest = Manifest {
            model_name: store.model_name.clone(),
            dim: store.dim,
            count: store.count(),
            normalized: store.normalized,
            checksum: store.checksum(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(staging.join(MANIFEST), json)?;
        let mut ids = String::new();
        for id in &store.ids {
            ids.push_str(id);
            ids.push('\n');
        }
        fs::write(staging.join(IDS), ids)?;
        fs::write(staging.join(MATRIX), matrix_bytes(&store.matrix))?;
        Ok(())
    })
    .map_err(io_err(dir))
}

pub fn read_store(dir: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).map_err(|source| EmbedError::Io { path, source })
    };
    let manifest_path = dir.join(MANIFEST);
    let manifest: Manifest =
        serde_json::from_slice(&read(MANIFEST)?).map_err(|e| EmbedError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
    if manifest.dim == 0 {
        return Err(EmbedError::Manifest {
            path: manifest_path,
            message: "dim must be positive".into(),
        });
    }
    let ids_raw = String::from_utf8(read(IDS)?).map_err(|e| EmbedError::Manifest {
        path: dir.join(IDS),
        message: e.to_string(),
    })?;
    let ids: Vec<String> = ids_raw.lines().map(str::to_string).collect();
    if ids.len() != manifest.count {
        return Err(EmbedError::CountMismatch {
            what: "ids.txt lines",
            manifest: manifest.count,
            actual: ids.len(),
        });
    }
    let bytes = read(MATRIX)?;
    let expected = manifest.count * manifest.dim * 4;
    if bytes.len() != expected {
        return Err(EmbedError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let actual = format!("{:08x}", crc32fast::hash(&bytes));
    if actual != manifest.checksum {
        return Err(EmbedError::Checksum {
            expected: manifest.checksum,
            actual,
        });
    }
    let matrix = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingStore::new(
        manifest.model_name,
        manifest.dim,
        ids,
        matrix,
        manifest.normalized,
    )
}

/// Placement of one model's segment inside a concatenated vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub model_name: String,
    pub offset: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatVector {
    pub id: String,
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

fn layout_of(stores: &[&EmbeddingStore]) -> Vec<Segment> {
    let mut offset = 0;
    stores
        .iter()
        .map(|s| {
            let seg = Segment {
                model_name: s.model_name.clone(),
                offset,
                dim: s.dim,
            };
            offset += s.dim;
            seg
        })
        .collect()
}

/// Builds ensemble vectors from an ordered list of per-model stores.
///
/// The first call fixes the store order; later calls with a different order
/// are rejected so every vector of a run shares one layout.
#[derive(Debug, Clone)]
pub struct Concatenator {
    normalize: bool,
    layout: Option<Vec<Segment>>,
}

impl Default for Concatenator {
    fn default() -> Self {
        Self::new(true)
    }
}

impl Concatenator {
    pub fn new(normalize: bool) -> Self {
        Self {
            normalize,
            layout: None,
        }
    }

    pub fn layout(&self) -> Option<&[Segment]> {
        self.layout.as_deref()
    }

    pub fn total_dim(&self) -> Option<usize> {
        self.layout.as_ref().map(|l| l.iter().map(|s| s.dim).sum())
    }

    fn check_layout(&mut self, stores: &[&EmbeddingStore]) -> Result<()> {
        if stores.is_empty() {
            return Err(EmbedError::NoStores);
        }
        let layout = layout_of(stores);
        match &self.layout {
            None => self.layout = Some(layout),
            Some(prev) if *prev != layout => {
                return Err(EmbedError::LayoutChanged {
                    expected: prev.iter().map(|s| s.model_name.clone()).collect(),
                    actual: layout.into_iter().map(|s| s.model_name).collect(),
                })
            }
            Some(_) => {}
        }
        Ok(())
    }

    /// Appends the (optionally normalized) segment for `id` from each store
    /// onto `out`.
    fn extend_row(&self, stores: &[&EmbeddingStore], id: &str, out: &mut Vec<f64>) -> Result<()> {
        for s in stores {
            let row = s.get(id).ok_or_else(|| EmbedError::MissingId {
                model: s.model_name.clone(),
                id: id.to_string(),
            })?;
            let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            if self.normalize {
                out.extend(l2_normalize(&row)?);
            } else {
                out.extend(row);
            }
        }
        Ok(())
    }

    pub fn concat(&mut self, stores: &[&EmbeddingStore], id: &str) -> Result<ConcatVector> {
        self.check_layout(stores)?;
        let mut values = Vec::with_capacity(self.total_dim().unwrap_or(0));
        self.extend_row(stores, id, &mut values)?;
        Ok(ConcatVector {
            id: id.to_string(),
            values,
            layout: self.layout.clone().unwrap_or_default(),
        })
    }

    /// Concatenates many ids at once into a [`VectorTable`].
    pub fn concat_all<'a, I>(&mut self, stores: &[&EmbeddingStore], ids: I) -> Result<VectorTable>
    where
        I: IntoIterator<Item = &'a str>,
    {
        self.check_layout(stores)?;
        let dim = self.total_dim().unwrap_or(0);
        let mut table = VectorTable::new(dim);
        let mut row = Vec::with_capacity(dim);
        for id in ids {
            row.clear();
            self.extend_row(stores, id, &mut row)?;
            table.push(id, &row).map_err(|_| EmbedError::DuplicateId(id.to_string()))?;
        }
        Ok(table)
    }
}

/// Convenience wrapper for a one-off concatenation with a fresh layout.
pub fn concat_embeddings(
    stores: &[&EmbeddingStore],
    id: &str,
    normalize: bool,
) -> Result<ConcatVector> {
    Concatenator::new(normalize).concat(stores, id)
}

/// Dense `f64` row table keyed by id, used for concatenated and projected
/// vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VectorTable {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl VectorTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    /// Fails (returning the id) when the id is already present.
    pub fn push(&mut self, id: &str, row: &[f64]) -> std::result::Result<(), String> {
        assert_eq!(row.len(), self.dim, "row length must equal table dim");
        if self.index.contains_key(id) {
            return Err(id.to_string());
        }
        self.index.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn from_rows(dim: usize, ids: Vec<String>, data: Vec<f64>) -> Self {
        assert_eq!(ids.len() * dim, data.len());
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            dim,
            ids,
            data,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().map(String::as_str).zip(self.data.chunks_exact(self.dim.max(1)))
    }
}

/// Per-model document and query stores, in a fixed model order.
///
/// On disk: `ensemble.json` plus one subdirectory per model holding a `docs`
/// and a `queries` store.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    docs: Vec<EmbeddingStore>,
    queries: Vec<EmbeddingStore>,
    normalize: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleManifest {
    models: Vec<EnsembleEntry>,
    normalize: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleEntry {
    name: String,
    dir: String,
}

const ENSEMBLE_MANIFEST: &str = "ensemble.json";

fn model_dir_name(i: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{i:02}-{clean}")
}

impl Ensemble {
    pub fn new(
        docs: Vec<EmbeddingStore>,
        queries: Vec<EmbeddingStore>,
        normalize: bool,
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(EmbedError::NoStores);
        }
        if docs.len() != queries.len() {
            return Err(EmbedError::CountMismatch {
                what: "query stores",
                manifest: docs.len(),
                actual: queries.len(),
            });
        }
        for (d, q) in docs.iter().zip(&queries) {
            if d.model_name != q.model_name {
                return Err(EmbedError::LayoutChanged {
                    expected: docs.iter().map(|s| s.model_name.clone()).collect(),
                    actual: queries.iter().map(|s| s.model_name.clone()).collect(),
                });
            }
            if d.dim != q.dim {
                return Err(EmbedError::DimMismatch {
                    expected: d.dim,
                    actual: q.dim,
                });
            }
        }
        Ok(Self {
            docs,
            queries,
            normalize,
        })
    }

    pub fn models(&self) -> Vec<&str> {
        self.docs.iter().map(|s| s.model_name()).collect()
    }

    pub fn doc_stores(&self) -> &[EmbeddingStore] {
        &self.docs
    }

    pub fn query_stores(&self) -> &[EmbeddingStore] {
        &self.queries
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn total_dim(&self) -> usize {
        self.docs.iter().map(|s| s.dim).sum()
    }

    /// Concatenated document and query vectors, in store id order.
    pub fn concat_tables(&self) -> Result<(VectorTable, VectorTable)> {
        let mut c = Concatenator::new(self.normalize);
        let docs: Vec<&EmbeddingStore> = self.docs.iter().collect();
        let queries: Vec<&EmbeddingStore> = self.queries.iter().collect();
        let doc_table = c.concat_all(&docs, self.docs[0].ids.iter().map(String::as_str))?;
        let query_table = c.concat_all(&queries, self.queries[0].ids.iter().map(String::as_str))?;
        Ok((doc_table, query_table))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let io_err = |source| EmbedError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io_err)?;
        let mut entries = Vec::new();
        for (i, (d, q)) in self.docs.iter().zip(&self.queries).enumerate() {
            let sub = model_dir_name(i, &d.model_name);
            write_store(d, dir.join(&sub).join("docs"))?;
            write_store(q, dir.join(&sub).join("queries"))?;
            entries.push(EnsembleEntry {
                name: d.model_name.clone(),
                dir: sub,
            });
        }
        let manifest = EnsembleManifest {
            models: entries,
            normalize: self.normalize,
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        atomic::write_bytes(&dir.join(ENSEMBLE_MANIFEST), &json).map_err(io_err)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(ENSEMBLE_MANIFEST);
        let bytes = fs::read(&path).map_err(|source| EmbedError::Io {
            path: path.clone(),
            source,
        })?;
        let manifest: EnsembleManifest =
            serde_json::from_slice(&bytes).map_err(|e| EmbedError::Manifest {
                path: path.clone(),
                message: e.to_string(),
            })?;
        let mut docs = Vec::new();
        let mut queries = Vec::new();
        for entry in &manifest.models {
            let d = read_store(dir.join(&entry.dir).join("docs"))?;
            let q = read_store(dir.join(&entry.dir).join("queries"))?;
            if d.model_name != entry.name {
                return Err(EmbedError::Manifest {
                    path: path.clone(),
                    message: format!(
                        "entry {:?} points at a store for model {:?}",
                        entry.name, d.model_name
                    ),
                });
            }
            docs.push(d);
            queries.push(q);
        }
        Self::new(docs, queries, manifest.normalize)
    }
}
