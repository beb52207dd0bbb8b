//! Dataset manifests, image decoding, and embedder preprocessing.
//!
//! A manifest describes one evaluation run: a directory of real tiles, the
//! per-epoch directories of generated tiles, optional original/transformed/
//! reconstructed pair directories, and the preprocessing constants the
//! embedder expects. All paths in a manifest are resolved relative to the
//! manifest file itself.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at {path}: {source}")]
    ManifestParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("manifest field `{field}`: {reason}")]
    ManifestSchema { field: String, reason: String },
    #[error("referenced directory does not exist: {path}")]
    MissingDirectory { path: PathBuf },
    #[error("image decode error at {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: expected 3 bands, found {found}")]
    BandCount { path: PathBuf, found: u8 },
    #[error("{path}: unsupported sample format (expected 8-bit or 16-bit integer RGB)")]
    UnsupportedFormat { path: PathBuf },
    #[error("epoch {epoch} contains no images: {dir}")]
    EmptyEpoch { epoch: u32, dir: PathBuf },
    #[error("invalid tile: {0}")]
    InvalidTile(String),
}

/// How tiles are standardized and resized before embedding.
///
/// The constants are data, not code: pretrained embedders expect their own
/// training-time normalization, so the manifest carries them explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    /// Output size as (height, width).
    pub target_size: (u32, u32),
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
    pub resize_filter: ResizeFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    Bilinear,
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.target_size.0 == 0 || self.target_size.1 == 0 {
            return Err(IngestError::ManifestSchema {
                field: "preprocess.size".into(),
                reason: "target dimensions must be > 0".into(),
            });
        }
        if self.channel_std.iter().any(|&s| s <= 0.0) {
            return Err(IngestError::ManifestSchema {
                field: "preprocess.std".into(),
                reason: "channel std components must be > 0".into(),
            });
        }
        Ok(())
    }
}

/// An H×W RGB raster with row-major interleaved samples.
///
/// Tiles produced by [`load_image`] hold values in `[0, 1]`; tiles returned
/// by [`preprocess`] are standardized and may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTile {
    height: u32,
    width: u32,
    data: Vec<f32>,
}

impl ImageTile {
    pub const BANDS: usize = 3;

    pub fn new(height: u32, width: u32, data: Vec<f32>) -> Result<Self> {
        let expected = height as usize * width as usize * Self::BANDS;
        if data.len() != expected {
            return Err(IngestError::InvalidTile(format!(
                "data length {} does not match {height}x{width}x3 = {expected}",
                data.len()
            )));
        }
        Ok(ImageTile {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Sample at (row, col, band).
    #[inline]
    pub fn get(&self, y: u32, x: u32, band: usize) -> f32 {
        self.data[(y as usize * self.width as usize + x as usize) * Self::BANDS + band]
    }

    #[inline]
    pub fn set(&mut self, y: u32, x: u32, band: usize, v: f32) {
        self.data[(y as usize * self.width as usize + x as usize) * Self::BANDS + band] = v;
    }

    pub fn same_shape(&self, other: &ImageTile) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Original/transformed/reconstructed directories for paired diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDirs {
    pub original_dir: PathBuf,
    pub transformed_dir: PathBuf,
    pub reconstructed_dir: PathBuf,
}

/// A validated evaluation dataset layout.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub real_dir: PathBuf,
    /// (epoch index, directory), strictly increasing in epoch index.
    pub epochs: Vec<(u32, PathBuf)>,
    pub pair_dirs: Option<PairDirs>,
    pub preprocess: PreprocessSpec,
}

// On-disk JSON schema.

#[derive(Deserialize)]
struct ManifestJson {
    real_dir: String,
    #[serde(default)]
    epochs: Vec<EpochJson>,
    #[serde(default)]
    pairs: Option<PairsJson>,
    preprocess: PreprocessJson,
}

#[derive(Deserialize)]
struct EpochJson {
    epoch: u32,
    dir: String,
}

#[derive(Deserialize)]
struct PairsJson {
    original: String,
    transformed: String,
    reconstructed: String,
}

#[derive(Deserialize)]
struct PreprocessJson {
    size: [u32; 2],
    mean: [f64; 3],
    std: [f64; 3],
}

fn require_dir(path: PathBuf) -> Result<PathBuf> {
    if path.is_dir() {
        Ok(path)
    } else {
        Err(IngestError::MissingDirectory { path })
    }
}

/// Load and validate a manifest; relative paths are resolved against the
/// manifest file's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let json: ManifestJson =
        serde_json::from_str(&text).map_err(|source| IngestError::ManifestParse {
            path: path.to_path_buf(),
            source,
        })?;

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    if json.epochs.is_empty() && json.pairs.is_none() {
        return Err(IngestError::ManifestSchema {
            field: "epochs".into(),
            reason: "nothing to evaluate: need at least one of `epochs`, `pairs`".into(),
        });
    }
    for pair in json.epochs.windows(2) {
        if pair[1].epoch <= pair[0].epoch {
            return Err(IngestError::ManifestSchema {
                field: "epochs".into(),
                reason: format!(
                    "epoch indices not strictly increasing ({} then {})",
                    pair[0].epoch, pair[1].epoch
                ),
            });
        }
    }

    let preprocess = PreprocessSpec {
        target_size: (json.preprocess.size[0], json.preprocess.size[1]),
        channel_mean: json.preprocess.mean,
        channel_std: json.preprocess.std,
        resize_filter: ResizeFilter::Bilinear,
    };
    preprocess.validate()?;

    let real_dir = require_dir(resolve(&json.real_dir))?;
    let mut epochs = Vec::with_capacity(json.epochs.len());
    for e in &json.epochs {
        epochs.push((e.epoch, require_dir(resolve(&e.dir))?));
    }
    let pair_dirs = match &json.pairs {
        Some(p) => Some(PairDirs {
            original_dir: require_dir(resolve(&p.original))?,
            transformed_dir: require_dir(resolve(&p.transformed))?,
            reconstructed_dir: require_dir(resolve(&p.reconstructed))?,
        }),
        None => None,
    };

    Ok(DatasetManifest {
        real_dir,
        epochs,
        pair_dirs,
        preprocess,
    })
}

/// Decode an 8-bit or 16-bit RGB raster (PNG or TIFF) to a `[0, 1]` tile.
///
/// Integer samples are scaled by the format's maximum value (255 or 65535),
/// preserving radiometric resolution of 16-bit products.
pub fn load_image(path: &Path) -> Result<ImageTile> {
    let img = image::open(path).map_err(|source| IngestError::ImageDecode {
        path: path.to_path_buf(),
        source,
    })?;
    match img {
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
            ImageTile::new(h, w, data)
        }
        image::DynamicImage::ImageRgb16(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf
                .as_raw()
                .iter()
                .map(|&v| (v as f64 / 65535.0) as f32)
                .collect();
            ImageTile::new(h, w, data)
        }
        other => {
            let channels = other.color().channel_count();
            if channels != 3 {
                Err(IngestError::BandCount {
                    path: path.to_path_buf(),
                    found: channels,
                })
            } else {
                Err(IngestError::UnsupportedFormat {
                    path: path.to_path_buf(),
                })
            }
        }
    }
}

/// Encode a `[0, 1]` tile as an 8-bit RGB PNG (values rounded to `v * 255`).
pub fn save_png_8(tile: &ImageTile, path: &Path) -> Result<()> {
    let mut buf = image::RgbImage::new(tile.width(), tile.height());
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            let px = [
                (tile.get(y, x, 0).clamp(0.0, 1.0) * 255.0).round() as u8,
                (tile.get(y, x, 1).clamp(0.0, 1.0) * 255.0).round() as u8,
                (tile.get(y, x, 2).clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            buf.put_pixel(x, y, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|source| IngestError::ImageDecode {
        path: path.to_path_buf(),
        source,
    })
}

/// Encode a `[0, 1]` tile as a 16-bit RGB PNG (values rounded to `v * 65535`).
pub fn save_png_16(tile: &ImageTile, path: &Path) -> Result<()> {
    let mut buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(tile.width(), tile.height());
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            let px = [
                (tile.get(y, x, 0).clamp(0.0, 1.0) as f64 * 65535.0).round() as u16,
                (tile.get(y, x, 1).clamp(0.0, 1.0) as f64 * 65535.0).round() as u16,
                (tile.get(y, x, 2).clamp(0.0, 1.0) as f64 * 65535.0).round() as u16,
            ];
            buf.put_pixel(x, y, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|source| IngestError::ImageDecode {
        path: path.to_path_buf(),
        source,
    })
}

/// Bilinear resize with half-pixel centers and edge clamping.
///
/// Sample positions follow `src = (dst + 0.5) * (in / out) - 0.5`; when the
/// sizes already match this is the identity, bit-exact.
fn resize_bilinear(tile: &ImageTile, out_h: u32, out_w: u32) -> ImageTile {
    if tile.height() == out_h && tile.width() == out_w {
        return tile.clone();
    }
    let in_h = tile.height() as usize;
    let in_w = tile.width() as usize;
    let scale_y = in_h as f64 / out_h as f64;
    let scale_x = in_w as f64 / out_w as f64;
    let mut data = vec![0f32; out_h as usize * out_w as usize * ImageTile::BANDS];
    for oy in 0..out_h as usize {
        let sy = ((oy as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let wy = sy - y0 as f64;
        for ox in 0..out_w as usize {
            let sx = ((ox as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let wx = sx - x0 as f64;
            for b in 0..ImageTile::BANDS {
                let v00 = tile.get(y0 as u32, x0 as u32, b) as f64;
                let v01 = tile.get(y0 as u32, x1 as u32, b) as f64;
                let v10 = tile.get(y1 as u32, x0 as u32, b) as f64;
                let v11 = tile.get(y1 as u32, x1 as u32, b) as f64;
                let top = v00 * (1.0 - wx) + v01 * wx;
                let bot = v10 * (1.0 - wx) + v11 * wx;
                data[(oy * out_w as usize + ox) * ImageTile::BANDS + b] =
                    (top * (1.0 - wy) + bot * wy) as f32;
            }
        }
    }
    ImageTile {
        height: out_h,
        width: out_w,
        data,
    }
}

/// Resize to the spec's target size, then standardize each channel as
/// `(v - mean_c) / std_c`. Deterministic: identical inputs give bit-exact
/// identical output.
pub fn preprocess(tile: &ImageTile, spec: &PreprocessSpec) -> Result<ImageTile> {
    spec.validate()?;
    let ResizeFilter::Bilinear = spec.resize_filter;
    let mut out = resize_bilinear(tile, spec.target_size.0, spec.target_size.1);
    for (i, v) in out.data.iter_mut().enumerate() {
        let band = i % ImageTile::BANDS;
        *v = ((*v as f64 - spec.channel_mean[band]) / spec.channel_std[band]) as f32;
    }
    Ok(out)
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "tif", "tiff"];

/// List the supported image files of one directory in lexicographic order
/// of file name, independent of filesystem enumeration order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if path.is_file() && is_image {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Enumerate the image paths of every epoch directory. Empty directories
/// are an error, not a silent skip.
pub fn scan_epochs(manifest: &DatasetManifest) -> Result<Vec<(u32, Vec<PathBuf>)>> {
    let mut out = Vec::with_capacity(manifest.epochs.len());
    for (epoch, dir) in &manifest.epochs {
        let paths = list_images(dir)?;
        if paths.is_empty() {
            return Err(IngestError::EmptyEpoch {
                epoch: *epoch,
                dir: dir.clone(),
            });
        }
        out.push((*epoch, paths));
    }
    Ok(out)
}
