//! Principal component analysis with variance-threshold component selection.
//!
//! The fit is an exact symmetric eigendecomposition: of the `d × d` sample
//! covariance when `d ≤ n`, otherwise of the `n × n` Gram matrix of the
//! centered data, whose nonzero spectrum is the same. Components are sorted by
//! descending variance and each axis is signed so that its largest-magnitude
//! entry is positive. Axes of tied eigenvalues are only defined up to a
//! rotation inside their shared subspace.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::atomic;
use crate::embed::VectorTable;

/// Slack applied when comparing cumulative variance against the threshold,
/// so that a threshold of 1.0 is reachable despite rounding.
pub const THRESHOLD_SLACK: f64 = 1e-12;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.95;

/// Thresholds of the variance ablation grid.
pub const VARIANCE_SWEEP: [f64; 5] = [0.99, 0.95, 0.90, 0.80, 0.70];

const MAGIC: &[u8; 4] = b"NMPC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PcaError {
    #[error("need at least 2 rows to fit, got {0}")]
    TooFewRows(usize),
    #[error("input dimension must be at least 1")]
    ZeroDim,
    #[error("data length {len} is not a multiple of dim {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("all rows are identical (zero total variance)")]
    ZeroVariance,
    #[error("variance threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("dimension mismatch: model expects {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a PCA model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("inconsistent model file: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, PcaError>;

/// Full eigen-spectrum of the sample covariance.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// All `d` eigenvalues, descending; clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Unit axes for the leading eigenvalues, row `i` paired with
    /// `eigenvalues[i]`. May be shorter than `d` on the Gram route, where
    /// only axes with positive variance are recoverable.
    pub axes: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub total_variance: f64,
}

impl Spectrum {
    pub fn ratios(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|l| l / self.total_variance)
            .collect()
    }

    /// Smallest component count whose cumulative ratio reaches `threshold`.
    pub fn components_for(&self, threshold: f64) -> usize {
        let mut cum = 0.0;
        for (i, r) in self.ratios().into_iter().enumerate().take(self.axes.len()) {
            cum += r;
            if cum >= threshold - THRESHOLD_SLACK {
                return i + 1;
            }
        }
        self.axes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    variance_threshold: f64,
    mean: Vec<f64>,
    /// Row-major `n_components × input_dim`.
    components: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

fn check_data(data: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 {
        return Err(PcaError::ZeroDim);
    }
    if !data.len().is_multiple_of(dim) {
        return Err(PcaError::Ragged {
            len: data.len(),
            dim,
        });
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(PcaError::NonFinite {
            row: i / dim,
            col: i % dim,
        });
    }
    let n = data.len() / dim;
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    Ok(n)
}

fn column_mean(data: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let sums = data
        .par_chunks(dim * 256)
        .map(|block| {
            let mut acc = vec![0.0; dim];
            for row in block.chunks_exact(dim) {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc
        })
        .reduce(
            || vec![0.0; dim],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    sums.into_iter().map(|s| s / n as f64).collect()
}

fn sign_fix(axis: &mut [f64]) {
    let mut best = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigenpairs sorted by descending eigenvalue; ties keep solver order.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Computes the covariance spectrum of `data` (row-major, `dim` columns).
pub fn spectrum(data: &[f64], dim: usize) -> Result<Spectrum> {
    let n = check_data(data, dim)?;
    let mean = column_mean(data, n, dim);
    let centered = DMatrix::from_fn(n, dim, |i, j| data[i * dim + j] - mean[j]);
    let scale = 1.0 / (n as f64 - 1.0);
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() * scale;
    if total_variance <= 0.0 {
        return Err(PcaError::ZeroVariance);
    }

    let mut eigenvalues = Vec::with_capacity(dim);
    let mut axes = Vec::new();
    if dim <= n {
        let cov = centered.tr_mul(&centered) * scale;
        for (l, mut v) in sorted_eigen(cov) {
            sign_fix(&mut v);
            eigenvalues.push(l.max(0.0));
            axes.push(v);
        }
    } else {
        let gram = &centered * centered.transpose() * scale;
        for (l, u) in sorted_eigen(gram) {
            let l = l.max(0.0);
            eigenvalues.push(l);
            // Axes of numerically null directions cannot be recovered from the Gram side.
            if l > total_variance * 1e-13 {
                let u = nalgebra::DVector::from_vec(u);
                let v = centered.tr_mul(&u);
                let norm = v.norm();
                axes.push(v.iter().map(|x| x / norm).collect());
            }
        }
        eigenvalues.resize(dim, 0.0);
        gram_schmidt(&mut axes);
        axes.iter_mut().for_each(|v| sign_fix(v));
    }
    Ok(Spectrum {
        eigenvalues,
        axes,
        mean,
        total_variance,
    })
}

/// One re-orthogonalization pass; axes from the Gram route lose a few digits
/// of orthogonality for small eigenvalues.
fn gram_schmidt(axes: &mut [Vec<f64>]) {
    for i in 0..axes.len() {
        let (done, rest) = axes.split_at_mut(i);
        let v = &mut rest[0];
        for u in done.iter() {
            let d: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

impl PcaModel {
    /// Fits on row-major `data` with `dim` columns, keeping the fewest
    /// components whose cumulative explained variance reaches
    /// `variance_threshold`.
    pub fn fit(data: &[f64], dim: usize, variance_threshold: f64) -> Result<Self> {
        if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
            return Err(PcaError::BadThreshold(variance_threshold));
        }
        let spec = spectrum(data, dim)?;
        Ok(Self::from_spectrum(&spec, variance_threshold))
    }

    pub fn fit_table(table: &VectorTable, variance_threshold: f64) -> Result<Self> {
        Self::fit(table.data(), table.dim(), variance_threshold)
    }

    /// Selects components from an already computed spectrum.
    pub fn from_spectrum(spec: &Spectrum, variance_threshold: f64) -> Self {
        let m = spec.components_for(variance_threshold);
        let ratios = spec.ratios();
        Self {
            input_dim: spec.mean.len(),
            variance_threshold,
            mean: spec.mean.clone(),
            components: spec.axes[..m].concat(),
            explained_variance_ratio: ratios[..m].to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_components(&self) -> usize {
        self.explained_variance_ratio.len()
    }

    pub fn variance_threshold(&self) -> f64 {
        self.variance_threshold
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn components(&self) -> impl Iterator<Item = &[f64]> {
        self.components.chunks_exact(self.input_dim)
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn cumulative_variance(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }

    /// Projects one vector: `(x − mean) · Cᵀ`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(PcaError::DimMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(self.project(x))
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(ci, (xi, mi))| ci * (xi - mi))
                    .sum()
            })
            .collect()
    }

    /// Projects every row of `table`.
    pub fn transform_table(&self, table: &VectorTable) -> Result<VectorTable> {
        if table.dim() != self.input_dim {
            return Err(PcaError::DimMismatch {
                expected: self.input_dim,
                actual: table.dim(),
            });
        }
        let data: Vec<f64> = table
            .data()
            .par_chunks(self.input_dim)
            .flat_map_iter(|row| self.project(row))
            .collect();
        Ok(VectorTable::from_rows(
            self.n_components(),
            table.ids().to_vec(),
            data,
        ))
    }

    /// Maps a projected vector back into input space.
    pub fn reconstruct(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_components() {
            return Err(PcaError::DimMismatch {
                expected: self.n_components(),
                actual: y.len(),
            });
        }
        let mut x = self.mean.clone();
        for (c, &w) in self.components().zip(y) {
            x.iter_mut().zip(c).for_each(|(xi, ci)| *xi += w * ci);
        }
        Ok(x)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            24 + 8 * (self.mean.len() + self.components.len() + self.n_components()) + 4,
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_components() as u32).to_le_bytes());
        out.extend_from_slice(&self.variance_threshold.to_le_bytes());
        for v in self
            .mean
            .iter()
            .chain(&self.components)
            .chain(&self.explained_variance_ratio)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(PcaError::BadMagic);
        }
        if bytes.len() < 28 {
            return Err(PcaError::Consistency(format!(
                "file too short ({} bytes)",
                bytes.len()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(PcaError::Version(version));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(PcaError::Checksum);
        }
        let input_dim = u32_at(8) as usize;
        let n_components = u32_at(12) as usize;
        let variance_threshold = f64_at(16);
        let floats = input_dim + n_components * input_dim + n_components;
        let expected = 24 + 8 * floats + 4;
        if bytes.len() != expected || input_dim == 0 || n_components > input_dim {
            return Err(PcaError::Consistency(format!(
                "header says input_dim {input_dim}, n_components {n_components} \
                 ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let values: Vec<f64> = (0..floats).map(|i| f64_at(24 + 8 * i)).collect();
        let (mean, rest) = values.split_at(input_dim);
        let (components, ratios) = rest.split_at(n_components * input_dim);
        Ok(Self {
            input_dim,
            variance_threshold,
            mean: mean.to_vec(),
            components: components.to_vec(),
            explained_variance_ratio: ratios.to_vec(),
        })
    }
}

/// Fitted explained-variance ratios of the retained components.
pub fn explained_variance(model: &PcaModel) -> &[f64] {
    model.explained_variance_ratio()
}

pub fn save_model(model: &PcaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    atomic::write_bytes(path, &model.to_bytes()).map_err(|source| PcaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PcaModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PcaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    PcaModel::from_bytes(&bytes)
}
