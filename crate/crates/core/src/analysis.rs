//! Distribution-matching and artifact diagnostics.
//!
//! PCA projection with kernel density curves backs the pair-plot export;
//! band-wise L1 maps surface translation artifacts such as grid patterns;
//! `epoch_series` assembles the per-epoch metric records and quantifies
//! their trends with Spearman rank correlations.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::cst::{self, CstParams};
use crate::embed::FeatureMatrix;
use crate::ingest::ImageTile;
use crate::metrics::{self, fit_gaussian, frechet_distance};

pub type Result<T> = std::result::Result<T, AnalysisError>;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("component count {k} out of range (max {max})")]
    KOutOfRange { k: usize, max: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("all values identical; kernel bandwidth would be zero")]
    DegenerateValues,
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("tile shapes do not match")]
    ShapeMismatch,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("rank variance is zero; correlation undefined")]
    ZeroRankVariance,
    #[error("no features supplied for epoch {epoch}")]
    FidEpochMissing { epoch: u32 },
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Cst(#[from] cst::CstError),
}

/// Principal component basis fit to a feature matrix.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `k x D`, orthonormal rows; each row's largest-magnitude entry is
    /// positive so the basis is reproducible across runs.
    pub components: DMatrix<f64>,
    /// Non-increasing, one entry per component: `sigma_i^2 / (N - 1)`.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }
}

/// Fit a `k`-component PCA by singular value decomposition of the
/// mean-centered data.
pub fn pca_fit(features: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    let n = features.n_samples();
    let d = features.dim();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: n });
    }
    let max_k = (n - 1).min(d);
    if k == 0 || k > max_k {
        return Err(AnalysisError::KOutOfRange { k, max: max_k });
    }

    let mut mean = vec![0.0f64; d];
    for row in features.rows() {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features.get(i, j) as f64 - mean[j]);

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    // Singular values arrive sorted descending; keep the top k directions.
    let mut components = DMatrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for comp in 0..k {
        let row = v_t.row(comp);
        // Sign convention: the largest-magnitude entry is positive.
        let mut max_idx = 0;
        for j in 1..d {
            if row[j].abs() > row[max_idx].abs() {
                max_idx = j;
            }
        }
        let flip = if row[max_idx] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(comp, j)] = row[j] * flip;
        }
        let sigma = svd.singular_values[comp];
        explained_variance.push(sigma * sigma / (n as f64 - 1.0));
    }
    Ok(PcaModel {
        mean: DVector::from_vec(mean),
        components,
        explained_variance,
    })
}

/// Project rows into the component space: `(F - mean) * components^T`.
pub fn pca_project(model: &PcaModel, features: &FeatureMatrix) -> Result<DMatrix<f64>> {
    if features.dim() != model.dim() {
        return Err(AnalysisError::DimensionMismatch {
            left: features.dim(),
            right: model.dim(),
        });
    }
    let n = features.n_samples();
    let centered = DMatrix::from_fn(n, model.dim(), |i, j| {
        features.get(i, j) as f64 - model.mean[j]
    });
    Ok(centered * model.components.transpose())
}

/// Default abscissa resolution for density curves.
pub const KDE_DEFAULT_GRID: usize = 256;

/// A 1-D Gaussian kernel density estimate evaluated on a regular grid.
#[derive(Debug, Clone, Serialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl DensityCurve {
    /// Trapezoidal integral over the grid; close to one whenever the grid
    /// spans the data by the standard four bandwidths.
    pub fn integral(&self) -> f64 {
        let mut total = 0.0;
        for i in 1..self.grid.len() {
            total +=
                (self.grid[i] - self.grid[i - 1]) * (self.density[i] + self.density[i - 1]) / 2.0;
        }
        total
    }
}

/// Gaussian-kernel density estimate with Scott's bandwidth
/// `h = sigma_hat * n^(-1/5)`, evaluated on `grid_points` evenly spaced
/// points spanning `[min - 4h, max + 4h]`.
pub fn kde_1d(values: &[f64], grid_points: usize) -> Result<DensityCurve> {
    let n = values.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { needed: 2, got: n });
    }
    if grid_points < 2 {
        return Err(AnalysisError::TooFewSamples {
            needed: 2,
            got: grid_points,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(AnalysisError::DegenerateValues);
    }
    let bandwidth = var.sqrt() * (n as f64).powf(-0.2);

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 4.0 * bandwidth;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 4.0 * bandwidth;
    let step = (hi - lo) / (grid_points as f64 - 1.0);
    let norm = 1.0 / (n as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());

    let mut grid = Vec::with_capacity(grid_points);
    let mut density = Vec::with_capacity(grid_points);
    for g in 0..grid_points {
        let x = lo + g as f64 * step;
        let mut acc = 0.0;
        for &v in values {
            let z = (x - v) / bandwidth;
            acc += (-0.5 * z * z).exp();
        }
        grid.push(x);
        density.push(acc * norm);
    }
    Ok(DensityCurve {
        grid,
        density,
        bandwidth,
    })
}

/// Which bands a difference map covers. `All` sums the per-band absolute
/// differences per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BandMode {
    Red,
    Green,
    Blue,
    All,
}

/// Per-pixel non-negative L1 differences between two same-shaped tiles.
#[derive(Debug, Clone)]
pub struct L1Map {
    pub height: u32,
    pub width: u32,
    pub values: Vec<f64>,
    pub band_mode: BandMode,
}

impl L1Map {
    pub fn min_max(&self) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.values {
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// Per-pixel `|a - b|` over the selected band(s).
pub fn band_l1_map(a: &ImageTile, b: &ImageTile, band_mode: BandMode) -> Result<L1Map> {
    if !a.same_shape(b) {
        return Err(AnalysisError::ShapeMismatch);
    }
    let count = a.height() as usize * a.width() as usize;
    let mut values = Vec::with_capacity(count);
    for px in 0..count {
        let diff = |band: usize| {
            (a.data()[px * 3 + band] as f64 - b.data()[px * 3 + band] as f64).abs()
        };
        let v = match band_mode {
            BandMode::Red => diff(0),
            BandMode::Green => diff(1),
            BandMode::Blue => diff(2),
            BandMode::All => diff(0) + diff(1) + diff(2),
        };
        values.push(v);
    }
    Ok(L1Map {
        height: a.height(),
        width: a.width(),
        values,
        band_mode,
    })
}

/// Spearman rank correlation: Pearson correlation of ranks, ties assigned
/// average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(AnalysisError::TooFewSamples {
            needed: 3,
            got: xs.len(),
        });
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(AnalysisError::ZeroRankVariance);
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// One epoch's metric record.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub fid: Option<f64>,
    pub frd: f64,
    pub crd_distance: f64,
    pub rf_mean_logloss: f64,
    pub n_generated: usize,
    pub n_real: usize,
}

/// Spearman rank correlation of each metric against the epoch index.
/// Absent entries mean the correlation was degenerate or no FID input was
/// supplied.
#[derive(Debug, Clone, Serialize)]
pub struct TrendStats {
    pub fid: Option<f64>,
    pub frd: Option<f64>,
    pub crd_distance: Option<f64>,
    pub rf_mean_logloss: Option<f64>,
}

/// Per-epoch metric series with trend statistics (trend requires at least
/// three epochs).
#[derive(Debug, Clone, Serialize)]
pub struct MetricSeries {
    pub records: Vec<EpochRecord>,
    pub trend: Option<TrendStats>,
}

/// Second feature family (Inception-style) used for the FID column.
#[derive(Debug, Clone, Copy)]
pub struct FidInputs<'a> {
    pub real: &'a FeatureMatrix,
    pub epochs: &'a [(u32, FeatureMatrix)],
}

/// Compute the FRD, CRD, and classifier log loss of every epoch against the
/// real features, plus FID when a second feature family is supplied.
pub fn epoch_series(
    real: &FeatureMatrix,
    epochs: &[(u32, FeatureMatrix)],
    cst_params: &CstParams,
    fid_inputs: Option<FidInputs<'_>>,
) -> Result<MetricSeries> {
    let real_summary = fit_gaussian(real)?;
    let fid_real_summary = match fid_inputs {
        Some(inputs) => Some(fit_gaussian(inputs.real)?),
        None => None,
    };

    let mut records = Vec::with_capacity(epochs.len());
    for (epoch, generated) in epochs {
        let frd = frechet_distance(&fit_gaussian(generated)?, &real_summary)?.value;
        let crd = metrics::crd(generated, real, true)?.distance;
        let logloss = cst::two_sample_test(generated, real, cst_params)?.mean_logloss;
        let fid = match (&fid_inputs, &fid_real_summary) {
            (Some(inputs), Some(real_fid)) => {
                let fid_features = inputs
                    .epochs
                    .iter()
                    .find(|(e, _)| e == epoch)
                    .map(|(_, f)| f)
                    .ok_or(AnalysisError::FidEpochMissing { epoch: *epoch })?;
                Some(frechet_distance(&fit_gaussian(fid_features)?, real_fid)?.value)
            }
            _ => None,
        };
        records.push(EpochRecord {
            epoch: *epoch,
            fid,
            frd,
            crd_distance: crd,
            rf_mean_logloss: logloss,
            n_generated: generated.n_samples(),
            n_real: real.n_samples(),
        });
    }

    let trend = if records.len() >= 3 {
        let epochs_f: Vec<f64> = records.iter().map(|r| r.epoch as f64).collect();
        let corr = |values: Vec<f64>| spearman(&epochs_f, &values).ok();
        let fid_trend = if records.iter().all(|r| r.fid.is_some()) {
            corr(records.iter().map(|r| r.fid.unwrap()).collect())
        } else {
            None
        };
        Some(TrendStats {
            fid: fid_trend,
            frd: corr(records.iter().map(|r| r.frd).collect()),
            crd_distance: corr(records.iter().map(|r| r.crd_distance).collect()),
            rf_mean_logloss: corr(records.iter().map(|r| r.rf_mean_logloss).collect()),
        })
    } else {
        None
    };

    Ok(MetricSeries { records, trend })
}

/// One sample row of a pair-plot export.
#[derive(Debug, Clone, Serialize)]
pub struct PairplotSample {
    pub group: String,
    pub coords: Vec<f64>,
}

/// Density curve of one (group, component) cell.
#[derive(Debug, Clone, Serialize)]
pub struct GroupDensity {
    pub group: String,
    /// 1-based component number.
    pub component: usize,
    #[serde(flatten)]
    pub curve: DensityCurve,
}

/// Pair-plot data: per-sample projections plus per-(group, component)
/// density curves, all in one shared component space.
#[derive(Debug, Clone, Serialize)]
pub struct PairplotExport {
    pub k: usize,
    pub explained_variance: Vec<f64>,
    pub samples: Vec<PairplotSample>,
    pub densities: Vec<GroupDensity>,
}

/// Fit one PCA basis on the concatenation of all groups (so distributions
/// are comparable across panels) and export projections and KDE curves.
pub fn pairplot_export(groups: &[(String, &FeatureMatrix)], k: usize) -> Result<PairplotExport> {
    if groups.len() < 2 {
        return Err(AnalysisError::TooFewGroups(groups.len()));
    }
    let d = groups[0].1.dim();
    for (_, f) in groups {
        if f.dim() != d {
            return Err(AnalysisError::DimensionMismatch {
                left: d,
                right: f.dim(),
            });
        }
    }
    let mut pooled = Vec::new();
    for (_, f) in groups {
        pooled.extend_from_slice(f.data());
    }
    let total: usize = groups.iter().map(|(_, f)| f.n_samples()).sum();
    let pooled = FeatureMatrix::new(total, d, pooled).expect("pooled matrix");
    let model = pca_fit(&pooled, k)?;

    let mut samples = Vec::with_capacity(total);
    let mut densities = Vec::new();
    for (label, features) in groups {
        let projected = pca_project(&model, features)?;
        for i in 0..features.n_samples() {
            samples.push(PairplotSample {
                group: label.clone(),
                coords: (0..k).map(|c| projected[(i, c)]).collect(),
            });
        }
        for c in 0..k {
            let column: Vec<f64> = (0..features.n_samples()).map(|i| projected[(i, c)]).collect();
            densities.push(GroupDensity {
                group: label.clone(),
                component: c + 1,
                curve: kde_1d(&column, KDE_DEFAULT_GRID)?,
            });
        }
    }
    Ok(PairplotExport {
        k,
        explained_variance: model.explained_variance,
        samples,
        densities,
    })
}
