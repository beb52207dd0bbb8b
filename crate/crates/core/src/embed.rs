//! Embedders and the on-disk feature cache.
//!
//! Two embedder kinds sit behind one contract: an external ONNX model (the
//! production path: a pretrained CNN whose single output is the pooled
//! penultimate activation vector) and a seeded Gaussian projection (a
//! deterministic stand-in used by tests and fixtures). Both produce a
//! [`FeatureMatrix`] whose row order equals the input tile order.
//!
//! Feature matrices persist in the `FEAT1` cache format so metric runs never
//! re-embed:
//!
//! ```text
//! magic   5 bytes  b"FEAT1"
//! n       u32 LE   row count
//! d       u32 LE   feature dimension
//! payload n*d f32 LE, row-major
//! labels  optional: u32 LE count (= n), then per label u32 LE byte length
//!         followed by UTF-8 bytes
//! ```
//!
//! Cache files are written to a temporary sibling and renamed into place, so
//! readers never observe partial files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::ImageTile;
use crate::rng;

mod onnx;

pub use onnx::OnnxEmbedder;

pub type Result<T> = std::result::Result<T, EmbedError>;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid feature matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid embedder spec: {0}")]
    InvalidSpec(String),
    #[error("failed to load model {path}: {message}")]
    ModelLoad { path: PathBuf, message: String },
    #[error("model output dimension {found} does not match expected {expected}")]
    OutputShape { expected: usize, found: usize },
    #[error("model inference failed: {message}")]
    Inference { message: String },
    #[error("row {row} has zero norm; cannot normalize")]
    ZeroNormRow { row: usize },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad cache magic: expected \"FEAT1\", found {found:?}")]
    BadMagic { found: String },
    #[error("truncated cache file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("cache dimensions overflow: {n} x {d} rows/columns")]
    SizeOverflow { n: u32, d: u32 },
}

/// N x D matrix of embedded samples, one row per image, stored as 32-bit
/// floats. Metric arithmetic promotes to 64-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    labels: Option<Vec<String>>,
}

impl FeatureMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(EmbedError::InvalidMatrix(format!(
                "dimensions must be >= 1, got {n} x {d}"
            )));
        }
        if data.len() != n * d {
            return Err(EmbedError::InvalidMatrix(format!(
                "data length {} does not match {n} x {d}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidMatrix(format!(
                "non-finite value at flat index {i}"
            )));
        }
        Ok(FeatureMatrix {
            n,
            d,
            data,
            labels: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(EmbedError::InvalidMatrix("ragged rows".into()));
        }
        FeatureMatrix::new(n, d, rows.into_iter().flatten().collect())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(EmbedError::InvalidMatrix(format!(
                "label count {} does not match row count {}",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.d + j]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Copy of the selected rows (labels dropped).
    pub fn subset(&self, indices: &[usize]) -> Result<FeatureMatrix> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix::new(indices.len(), self.d, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    /// ONNX operator graph with one NCHW float input and one `[N, D]` float
    /// output: the pooled penultimate layer of a pretrained network.
    ExternalModel,
    /// Seeded Gaussian random projection of the flattened tile followed by an
    /// elementwise absolute value. Deterministic in the seed; used where a
    /// pretrained model is unavailable (tests, fixtures).
    SeededProjection,
}

#[derive(Debug, Clone)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub model_path: Option<PathBuf>,
    pub output_dim: usize,
    pub seed: u64,
    pub normalize_rows: bool,
}

impl EmbedderSpec {
    pub fn external(model_path: PathBuf, output_dim: usize, normalize_rows: bool) -> Self {
        EmbedderSpec {
            kind: EmbedderKind::ExternalModel,
            model_path: Some(model_path),
            output_dim,
            seed: 0,
            normalize_rows,
        }
    }

    pub fn projection(seed: u64, output_dim: usize, normalize_rows: bool) -> Self {
        EmbedderSpec {
            kind: EmbedderKind::SeededProjection,
            model_path: None,
            output_dim,
            seed,
            normalize_rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(EmbedError::InvalidSpec("output_dim must be >= 1".into()));
        }
        if self.kind == EmbedderKind::ExternalModel && self.model_path.is_none() {
            return Err(EmbedError::InvalidSpec(
                "external_model requires model_path".into(),
            ));
        }
        Ok(())
    }
}

/// Project one tile to a D-vector with the seeded Gaussian projection.
///
/// Entry `(i, j)` of the projection matrix is the standard normal draw at
/// position `i * len + j` of the stream keyed by `seed` (see [`crate::rng`]),
/// where `len = H * W * 3`. The elementwise absolute value keeps outputs in
/// the nonnegative orthant so cosine similarities behave like CNN pooled
/// features.
pub fn seeded_projection_embed(tile: &ImageTile, seed: u64, output_dim: usize) -> Vec<f32> {
    let len = tile.data().len() as u64;
    (0..output_dim)
        .map(|i| {
            let base = i as u64 * len;
            let acc: f64 = tile
                .data()
                .iter()
                .enumerate()
                .map(|(j, &x)| rng::normal_at(seed, base + j as u64) * x as f64)
                .sum();
            acc.abs() as f32
        })
        .collect()
}

/// Embed tiles in input order. Tiles may be processed concurrently; the
/// output row order is defined by the input order regardless of scheduling.
pub fn embed_batch(tiles: &[ImageTile], spec: &EmbedderSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    if tiles.is_empty() {
        return Err(EmbedError::InvalidMatrix("no tiles to embed".into()));
    }
    let rows: Vec<Vec<f32>> = match spec.kind {
        EmbedderKind::SeededProjection => tiles
            .par_iter()
            .map(|t| seeded_projection_embed(t, spec.seed, spec.output_dim))
            .collect(),
        EmbedderKind::ExternalModel => {
            let path = spec.model_path.as_ref().expect("validated above");
            let embedder = OnnxEmbedder::load(path, spec.output_dim)?;
            let mut rows = Vec::with_capacity(tiles.len());
            for tile in tiles {
                rows.push(embedder.embed(tile)?);
            }
            rows
        }
    };
    let mut matrix = FeatureMatrix::from_rows(rows)?;
    if spec.normalize_rows {
        normalize_rows_in_place(&mut matrix)?;
    }
    Ok(matrix)
}

fn normalize_rows_in_place(matrix: &mut FeatureMatrix) -> Result<()> {
    let d = matrix.d;
    for i in 0..matrix.n {
        let row = &mut matrix.data[i * d..(i + 1) * d];
        let norm = row.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::ZeroNormRow { row: i });
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    Ok(())
}

const MAGIC: &[u8; 5] = b"FEAT1";
const HEADER_LEN: u64 = 5 + 4 + 4;

/// Serialize a feature matrix to the FEAT1 layout, atomically.
pub fn save_features(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let n = u32::try_from(matrix.n).map_err(|_| EmbedError::SizeOverflow {
        n: u32::MAX,
        d: matrix.d as u32,
    })?;
    let d = u32::try_from(matrix.d).map_err(|_| EmbedError::SizeOverflow {
        n,
        d: u32::MAX,
    })?;
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + matrix.data.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&n.to_le_bytes());
    bytes.extend_from_slice(&d.to_le_bytes());
    for v in &matrix.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = &matrix.labels {
        bytes.extend_from_slice(&(labels.len() as u32).to_le_bytes());
        for label in labels {
            bytes.extend_from_slice(&(label.len() as u32).to_le_bytes());
            bytes.extend_from_slice(label.as_bytes());
        }
    }

    let file_name = path
        .file_name()
        .ok_or_else(|| EmbedError::InvalidMatrix(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, &bytes).map_err(|source| EmbedError::Io {
        path: tmp.clone(),
        source,
    })?;
    fs::rename(&tmp, path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a FEAT1 cache file written by [`save_features`].
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|source| EmbedError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let actual = bytes.len() as u64;
    if actual < HEADER_LEN {
        return Err(EmbedError::Truncated {
            expected: HEADER_LEN,
            actual,
        });
    }
    if &bytes[0..5] != MAGIC {
        return Err(EmbedError::BadMagic {
            found: String::from_utf8_lossy(&bytes[0..5]).into_owned(),
        });
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap());
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
    let payload_len = (n as u64)
        .checked_mul(d as u64)
        .and_then(|c| c.checked_mul(4))
        .ok_or(EmbedError::SizeOverflow { n, d })?;
    let expected = HEADER_LEN + payload_len;
    if actual < expected {
        return Err(EmbedError::Truncated { expected, actual });
    }
    let count = (n as usize) * (d as usize);
    let mut data = Vec::with_capacity(count);
    let payload = &bytes[HEADER_LEN as usize..expected as usize];
    for chunk in payload.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let mut matrix = FeatureMatrix::new(n as usize, d as usize, data)?;

    let mut rest = &bytes[expected as usize..];
    if !rest.is_empty() {
        let take_u32 = |rest: &mut &[u8]| -> Result<u32> {
            if rest.len() < 4 {
                return Err(EmbedError::Truncated {
                    expected: expected + 4,
                    actual,
                });
            }
            let v = u32::from_le_bytes(rest[0..4].try_into().unwrap());
            *rest = &rest[4..];
            Ok(v)
        };
        let count = take_u32(&mut rest)?;
        if count as usize != matrix.n {
            return Err(EmbedError::InvalidMatrix(format!(
                "label count {count} does not match row count {}",
                matrix.n
            )));
        }
        let mut labels = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = take_u32(&mut rest)? as usize;
            if rest.len() < len {
                return Err(EmbedError::Truncated {
                    expected: actual + (len - rest.len()) as u64,
                    actual,
                });
            }
            let s = std::str::from_utf8(&rest[..len])
                .map_err(|e| EmbedError::InvalidMatrix(format!("label not UTF-8: {e}")))?;
            labels.push(s.to_owned());
            rest = &rest[len..];
        }
        if !rest.is_empty() {
            return Err(EmbedError::InvalidMatrix(format!(
                "{} unexpected trailing bytes",
                rest.len()
            )));
        }
        matrix = matrix.with_labels(labels)?;
    }
    Ok(matrix)
}
