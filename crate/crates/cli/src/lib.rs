//! Command implementations behind the `transeval` binary.
//!
//! Subcommands: `embed` (images to feature caches), `report` (per-epoch
//! metric series as CSV/JSON/SVG), `pairplot` (PCA projections plus density
//! curves), `band-l1` (per-band difference maps), and `fixtures` (a
//! deterministic synthetic dataset for end-to-end runs).
//!
//! Exit codes are a stable contract: 0 success, 1 computation failure,
//! 2 configuration or input error. All randomized outputs depend only on
//! `--seed`, so reruns with a fixed configuration are byte-identical.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use transeval::analysis::{
    self, band_l1_map, pairplot_export, BandMode, FidInputs, MetricSeries,
};
use transeval::cst::CstParams;
use transeval::embed::{
    embed_batch, load_features, save_features, EmbedError, EmbedderSpec, FeatureMatrix,
};
use transeval::fixtures;
use transeval::ingest::{
    self, list_images, load_image, load_manifest, preprocess, DatasetManifest, ImageTile,
    PreprocessSpec,
};
use transeval::metrics::round_trip_l1;
use transeval::rng::{derive, CounterRng};

pub mod svg;

/// Errors split by exit code: configuration/input problems exit 2,
/// computation failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "error: config: {msg}"),
            CliError::Compute(msg) => write!(f, "error: compute: {msg}"),
        }
    }
}

impl From<ingest::IngestError> for CliError {
    fn from(e: ingest::IngestError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Inference { .. } | EmbedError::ZeroNormRow { .. } => {
                CliError::Compute(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<transeval::metrics::MetricsError> for CliError {
    fn from(e: transeval::metrics::MetricsError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<transeval::cst::CstError> for CliError {
    fn from(e: transeval::cst::CstError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<analysis::AnalysisError> for CliError {
    fn from(e: analysis::AnalysisError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<fixtures::FixtureError> for CliError {
    fn from(e: fixtures::FixtureError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("io error at {}: {e}", path.display()))
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "transeval",
    version,
    about = "Quality metrics for unpaired image-to-image translation output"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Embed the real set and every epoch directory into feature caches.
    Embed(EmbedArgs),
    /// Compute the per-epoch metric series (FRD, CRD, RF log loss, FID).
    Report(ReportArgs),
    /// Export PCA pair-plot data for selected epochs against the real set.
    Pairplot(PairplotArgs),
    /// Write a band-wise L1 difference map between two images.
    #[command(name = "band-l1")]
    BandL1(BandL1Args),
    /// Generate a deterministic synthetic dataset (images + feature dumps).
    Fixtures(FixturesArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedderChoice {
    /// Seeded Gaussian projection (no model file needed).
    Projection,
    /// External ONNX model (requires --model).
    Model,
}

#[derive(Args, Debug, Clone)]
pub struct EmbedFlags {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Which embedder to run.
    #[arg(long, value_enum, default_value = "projection")]
    pub embedder: EmbedderChoice,
    /// ONNX model file for --embedder model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Feature dimension (projection output size; checked against model output).
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Master seed; drives every randomized stage.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Re-embed even when caches exist.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub flags: EmbedFlags,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    pub flags: EmbedFlags,
    /// Read FEAT1 caches (real.feat, epoch_*.feat) from a directory instead
    /// of embedding a manifest.
    #[arg(long, conflicts_with = "manifest")]
    pub features: Option<PathBuf>,
    /// Report formats, comma separated subset of csv,json,svg.
    #[arg(long, default_value = "csv,json,svg")]
    pub formats: String,
    /// Random-forest trees per classifier.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Two-sample test repeats.
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 2)]
    pub folds: usize,
    /// Second ONNX model for the FID column (Inception-style features).
    #[arg(long)]
    pub fid_model: Option<PathBuf>,
    /// Output dimension of the FID model.
    #[arg(long, default_value_t = 2048)]
    pub fid_dim: usize,
}

#[derive(Args, Debug)]
pub struct PairplotArgs {
    #[command(flatten)]
    pub flags: EmbedFlags,
    /// Read FEAT1 caches from a directory instead of embedding a manifest.
    #[arg(long, conflicts_with = "manifest")]
    pub features: Option<PathBuf>,
    /// Comma-separated epoch indices to plot against the real set.
    #[arg(long)]
    pub epochs: String,
    /// Principal components to export.
    #[arg(long, default_value_t = 3)]
    pub k_pca: usize,
}

#[derive(Args, Debug)]
pub struct BandL1Args {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub transformed: PathBuf,
    /// Band selection: red, green, blue, or all (per-pixel sum over bands).
    #[arg(long, value_enum, default_value = "all")]
    pub band: BandChoice,
    /// Output PNG path; a .scale.json sidecar lands next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum BandChoice {
    Red,
    Green,
    Blue,
    All,
}

impl From<BandChoice> for BandMode {
    fn from(b: BandChoice) -> Self {
        match b {
            BandChoice::Red => BandMode::Red,
            BandChoice::Green => BandMode::Green,
            BandChoice::Blue => BandMode::Blue,
            BandChoice::All => BandMode::All,
        }
    }
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of synthetic training epochs.
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Tiles per directory.
    #[arg(long, default_value_t = 8)]
    pub per_epoch: usize,
    /// Square tile edge in pixels.
    #[arg(long, default_value_t = 24)]
    pub size: u32,
    /// Feature dimension of the FEAT1 convergence dumps.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Grid-artifact period for the paired tiles.
    #[arg(long, default_value_t = 6)]
    pub period: u32,
    /// Grid-artifact amplitude.
    #[arg(long, default_value_t = 0.25)]
    pub amplitude: f32,
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Embed(args) => cmd_embed(&args.flags).map(|_| ()),
        Command::Report(args) => cmd_report(&args),
        Command::Pairplot(args) => cmd_pairplot(&args),
        Command::BandL1(args) => cmd_band_l1(&args),
        Command::Fixtures(args) => cmd_fixtures(&args),
    }
}

/// Format one value with 9 significant digits, "." decimal separator.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn embedder_spec(flags: &EmbedFlags) -> Result<EmbedderSpec> {
    match flags.embedder {
        EmbedderChoice::Projection => Ok(EmbedderSpec::projection(flags.seed, flags.dim, false)),
        EmbedderChoice::Model => {
            let model = flags.model.clone().ok_or_else(|| {
                CliError::Config("--embedder model requires --model PATH".into())
            })?;
            if !model.is_file() {
                return Err(CliError::Config(format!(
                    "model file does not exist: {}",
                    model.display()
                )));
            }
            Ok(EmbedderSpec::external(model, flags.dim, false))
        }
    }
}

fn epoch_cache_name(epoch: u32) -> String {
    format!("epoch_{epoch:04}.feat")
}

/// Embed one directory into a cache file unless a cache already exists.
fn ensure_cache(
    dir: &Path,
    cache_path: &Path,
    spec: &EmbedderSpec,
    pre: &PreprocessSpec,
    force: bool,
) -> Result<FeatureMatrix> {
    if cache_path.is_file() && !force {
        println!("cache hit {}", cache_path.display());
        return Ok(load_features(cache_path)?);
    }
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "directory contains no images: {}",
            dir.display()
        )));
    }
    let tiles: Vec<ImageTile> = paths
        .par_iter()
        .map(|p| load_image(p).and_then(|t| preprocess(&t, pre)))
        .collect::<std::result::Result<_, _>>()?;
    let labels: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let features = embed_batch(&tiles, spec)?.with_labels(labels)?;
    if let Some(parent) = cache_path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    save_features(&features, cache_path)?;
    println!("embedded {} tiles -> {}", features.n_samples(), cache_path.display());
    Ok(features)
}

struct CachedSeries {
    real: FeatureMatrix,
    epochs: Vec<(u32, FeatureMatrix)>,
}

/// Run the embed stage over a manifest (idempotent per cache file).
fn embed_manifest(flags: &EmbedFlags, spec: &EmbedderSpec, prefix: &str) -> Result<CachedSeries> {
    let manifest_path = flags
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Config("--manifest is required".into()))?;
    let manifest = load_manifest(manifest_path)?;
    let feature_dir = flags.out.join("features");
    let real = ensure_cache(
        &manifest.real_dir,
        &feature_dir.join(format!("{prefix}real.feat")),
        spec,
        &manifest.preprocess,
        flags.force,
    )?;
    let mut epochs = Vec::with_capacity(manifest.epochs.len());
    for (epoch, dir) in &manifest.epochs {
        let cache = feature_dir.join(format!("{prefix}{}", epoch_cache_name(*epoch)));
        epochs.push((
            *epoch,
            ensure_cache(dir, &cache, spec, &manifest.preprocess, flags.force)?,
        ));
    }
    Ok(CachedSeries { real, epochs })
}

fn cmd_embed(flags: &EmbedFlags) -> Result<CachedSeries> {
    let spec = embedder_spec(flags)?;
    embed_manifest(flags, &spec, "")
}

/// Load `real.feat` and `epoch_*.feat` from a directory of caches.
fn load_feature_dir(dir: &Path) -> Result<CachedSeries> {
    let real_path = dir.join("real.feat");
    if !real_path.is_file() {
        return Err(CliError::Config(format!(
            "missing cache {}",
            real_path.display()
        )));
    }
    let real = load_features(&real_path)?;
    let mut epochs = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(index) = name
            .strip_prefix("epoch_")
            .and_then(|rest| rest.strip_suffix(".feat"))
        {
            let epoch: u32 = index.parse().map_err(|_| {
                CliError::Config(format!("cannot parse epoch index from {name}"))
            })?;
            epochs.push((epoch, load_features(&entry.path())?));
        }
    }
    if epochs.is_empty() {
        return Err(CliError::Config(format!(
            "no epoch_*.feat caches in {}",
            dir.display()
        )));
    }
    epochs.sort_by_key(|(e, _)| *e);
    Ok(CachedSeries { real, epochs })
}

fn load_series(flags: &EmbedFlags, features_dir: &Option<PathBuf>) -> Result<CachedSeries> {
    match features_dir {
        Some(dir) => load_feature_dir(dir),
        None => cmd_embed(flags),
    }
}

#[derive(Serialize)]
struct EmbedderEcho {
    kind: &'static str,
    dim: usize,
    seed: u64,
    model: Option<String>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    #[serde(flatten)]
    series: &'a MetricSeries,
    round_trip_l1: Option<f64>,
    cst_params: &'a CstParams,
    embedder: EmbedderEcho,
}

fn parse_formats(s: &str) -> Result<Vec<&str>> {
    let mut formats = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if !["csv", "json", "svg"].contains(&part) {
            return Err(CliError::Config(format!(
                "unknown report format {part:?} (expected csv, json, svg)"
            )));
        }
        formats.push(part);
    }
    if formats.is_empty() {
        return Err(CliError::Config("at least one report format required".into()));
    }
    Ok(formats)
}

fn series_to_csv(series: &MetricSeries) -> String {
    let mut out = String::from("epoch,fid,frd,crd_distance,rf_mean_logloss,n_generated,n_real\n");
    for r in &series.records {
        let fid = r.fid.map(fmt9).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch,
            fid,
            fmt9(r.frd),
            fmt9(r.crd_distance),
            fmt9(r.rf_mean_logloss),
            r.n_generated,
            r.n_real
        ));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let formats = parse_formats(&args.formats)?;
    let series_data = load_series(&args.flags, &args.features)?;

    let fid_data = match (&args.fid_model, &args.features) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "--fid-model needs a manifest run, not --features".into(),
            ));
        }
        (Some(model), None) => {
            if !model.is_file() {
                return Err(CliError::Config(format!(
                    "model file does not exist: {}",
                    model.display()
                )));
            }
            let fid_spec = EmbedderSpec::external(model.clone(), args.fid_dim, false);
            Some(embed_manifest(&args.flags, &fid_spec, "fid_")?)
        }
        _ => None,
    };

    let cst_params = CstParams {
        n_trees: args.trees,
        n_repeats: args.repeats,
        n_folds: args.folds,
        master_seed: args.flags.seed,
        ..CstParams::default()
    };

    let fid_inputs = fid_data.as_ref().map(|d| FidInputs {
        real: &d.real,
        epochs: &d.epochs,
    });
    let series = analysis::epoch_series(
        &series_data.real,
        &series_data.epochs,
        &cst_params,
        fid_inputs,
    )?;

    // Round-trip reconstruction error when the manifest carries pair dirs.
    let round_trip = match &args.flags.manifest {
        Some(path) => {
            let manifest: DatasetManifest = load_manifest(path)?;
            match &manifest.pair_dirs {
                Some(pairs) => {
                    let originals = load_tile_dir(&pairs.original_dir)?;
                    let recons = load_tile_dir(&pairs.reconstructed_dir)?;
                    Some(round_trip_l1(&originals, &recons)?)
                }
                None => None,
            }
        }
        None => None,
    };

    fs::create_dir_all(&args.flags.out).map_err(|e| io_err(&args.flags.out, e))?;
    if formats.contains(&"csv") {
        write_text(&args.flags.out.join("report.csv"), &series_to_csv(&series))?;
    }
    if formats.contains(&"json") {
        let doc = ReportDoc {
            series: &series,
            round_trip_l1: round_trip,
            cst_params: &cst_params,
            embedder: EmbedderEcho {
                kind: match args.flags.embedder {
                    EmbedderChoice::Projection => "projection",
                    EmbedderChoice::Model => "model",
                },
                dim: args.flags.dim,
                seed: args.flags.seed,
                model: args.flags.model.as_ref().map(|p| p.display().to_string()),
            },
        };
        let json = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::Compute(format!("json serialization: {e}")))?;
        write_text(&args.flags.out.join("report.json"), &(json + "\n"))?;
    }
    if formats.contains(&"svg") {
        write_text(
            &args.flags.out.join("report.svg"),
            &svg::metric_series_chart(&series),
        )?;
    }
    Ok(())
}

fn load_tile_dir(dir: &Path) -> Result<Vec<ImageTile>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "directory contains no images: {}",
            dir.display()
        )));
    }
    Ok(paths
        .par_iter()
        .map(|p| load_image(p))
        .collect::<std::result::Result<_, _>>()?)
}

fn cmd_pairplot(args: &PairplotArgs) -> Result<()> {
    let series = load_series(&args.flags, &args.features)?;

    let mut selected: Vec<u32> = Vec::new();
    for part in args.epochs.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let epoch: u32 = part
            .parse()
            .map_err(|_| CliError::Config(format!("cannot parse epoch index {part:?}")))?;
        selected.push(epoch);
    }
    if selected.is_empty() {
        return Err(CliError::Config("--epochs selected no epochs".into()));
    }

    let mut groups: Vec<(String, &FeatureMatrix)> = Vec::new();
    for epoch in &selected {
        let features = series
            .epochs
            .iter()
            .find(|(e, _)| e == epoch)
            .map(|(_, f)| f)
            .ok_or_else(|| CliError::Config(format!("unknown epoch index {epoch}")))?;
        groups.push((format!("epoch_{epoch}"), features));
    }
    groups.push(("real".to_string(), &series.real));

    let export = pairplot_export(&groups, args.k_pca)?;

    fs::create_dir_all(&args.flags.out).map_err(|e| io_err(&args.flags.out, e))?;
    let mut csv = String::from("group");
    for c in 1..=export.k {
        csv.push_str(&format!(",pc{c}"));
    }
    csv.push('\n');
    for sample in &export.samples {
        csv.push_str(&sample.group);
        for v in &sample.coords {
            csv.push(',');
            csv.push_str(&fmt9(*v));
        }
        csv.push('\n');
    }
    write_text(&args.flags.out.join("pairplot.csv"), &csv)?;

    let json = serde_json::to_string_pretty(&export.densities)
        .map_err(|e| CliError::Compute(format!("json serialization: {e}")))?;
    write_text(&args.flags.out.join("pairplot_density.json"), &(json + "\n"))?;
    Ok(())
}

#[derive(Serialize)]
struct ScaleSidecar {
    band: BandMode,
    width: u32,
    height: u32,
    min: f64,
    max: f64,
}

fn cmd_band_l1(args: &BandL1Args) -> Result<()> {
    let original = load_image(&args.original)?;
    let transformed = load_image(&args.transformed)?;
    let map = band_l1_map(&original, &transformed, args.band.into())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (min, max) = map.min_max();

    // 16-bit grayscale PNG scaled by the recorded min/max; a flat map (all
    // values equal) encodes as zeros and the sidecar carries the scale.
    let mut buf =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(map.width, map.height);
    let range = max - min;
    for (i, &v) in map.values.iter().enumerate() {
        let x = (i as u32) % map.width;
        let y = (i as u32) / map.width;
        let level = if range > 0.0 {
            ((v - min) / range * 65535.0).round() as u16
        } else {
            0
        };
        buf.put_pixel(x, y, image::Luma([level]));
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    buf.save(&args.out)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", args.out.display())))?;
    println!("wrote {}", args.out.display());

    let sidecar_path = args.out.with_extension("scale.json");
    let sidecar = ScaleSidecar {
        band: args.band.into(),
        width: map.width,
        height: map.height,
        min,
        max,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CliError::Compute(format!("json serialization: {e}")))?;
    write_text(&sidecar_path, &(json + "\n"))?;
    Ok(())
}

/// Synthetic dataset layout written by `transeval fixtures`.
///
/// Image tiles interpolate from a displaced pattern toward the real pattern
/// as the epoch index rises, mirroring a training run; the paired dirs carry
/// a red-shift plus grid artifact for band-L1 inspection; `features/` holds
/// FEAT1 dumps of the feature-level convergence fixture for
/// `report --features`.
fn cmd_fixtures(args: &FixturesArgs) -> Result<()> {
    if args.per_epoch < 2 {
        return Err(CliError::Config("--per-epoch must be >= 2".into()));
    }
    if args.epochs < 3 {
        return Err(CliError::Config("--epochs must be >= 3".into()));
    }
    if args.size < args.period {
        return Err(CliError::Config("--size must be >= --period".into()));
    }
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let size = args.size;
    let pattern = |far: bool, y: u32, x: u32, band: usize| -> f64 {
        let fy = y as f64 / (size - 1).max(1) as f64;
        let fx = x as f64 / (size - 1).max(1) as f64;
        let v = match band {
            0 => 0.3 + 0.4 * fy,
            1 => 0.3 + 0.4 * fx,
            _ => 0.5,
        };
        if far {
            1.0 - v
        } else {
            v
        }
    };
    let make_tile = |alpha: f64, tile_seed: u64| -> ImageTile {
        let mut rng = CounterRng::new(tile_seed);
        let mut data = Vec::with_capacity((size * size * 3) as usize);
        for y in 0..size {
            for x in 0..size {
                for band in 0..3 {
                    let real_v = pattern(false, y, x, band);
                    let far_v = pattern(true, y, x, band);
                    let base = (1.0 - alpha) * far_v + alpha * real_v;
                    let noise = (rng.next_f64() - 0.5) * 0.1;
                    data.push((base + noise).clamp(0.0, 1.0) as f32);
                }
            }
        }
        ImageTile::new(size, size, data).expect("sized data")
    };
    let write_dir = |name: &str, alpha: f64, dir_tag: u64| -> Result<PathBuf> {
        let dir = out.join(name);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let dir_seed = derive(args.seed, dir_tag);
        for i in 0..args.per_epoch {
            let tile = make_tile(alpha, derive(dir_seed, i as u64));
            ingest::save_png_8(&tile, &dir.join(format!("tile_{i:03}.png")))?;
        }
        Ok(dir)
    };

    write_dir("real", 1.0, 1_000_000)?;
    let mut epoch_entries = String::new();
    for t in 1..=args.epochs {
        let alpha = t as f64 / args.epochs as f64;
        write_dir(&format!("epoch_{t}"), alpha, t as u64)?;
        if t > 1 {
            epoch_entries.push_str(", ");
        }
        epoch_entries.push_str(&format!(r#"{{"epoch": {t}, "dir": "epoch_{t}"}}"#));
    }

    // Paired originals/transformed/reconstructed for band-L1 and round-trip
    // inspection: transformed = original + red shift + grid lattice.
    let pair_seed = derive(args.seed, 2_000_000);
    let dirs = ["pairs/original", "pairs/transformed", "pairs/reconstructed"];
    for d in dirs {
        let dir = out.join(d);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    for i in 0..args.per_epoch.min(4) {
        let original = make_tile(1.0, derive(pair_seed, i as u64));
        let mut transformed = original.clone();
        for y in 0..size {
            for x in 0..size {
                let v = transformed.get(y, x, 0);
                transformed.set(y, x, 0, (v * 0.5 + 0.25).clamp(0.0, 1.0));
            }
        }
        let transformed = fixtures::gen_grid_image(&transformed, args.period, args.amplitude)?;
        let name = format!("tile_{i:03}.png");
        ingest::save_png_8(&original, &out.join("pairs/original").join(&name))?;
        ingest::save_png_8(&transformed, &out.join("pairs/transformed").join(&name))?;
        ingest::save_png_8(&original, &out.join("pairs/reconstructed").join(&name))?;
    }

    let manifest = format!(
        r#"{{
  "real_dir": "real",
  "epochs": [{epoch_entries}],
  "pairs": {{
    "original": "pairs/original",
    "transformed": "pairs/transformed",
    "reconstructed": "pairs/reconstructed"
  }},
  "preprocess": {{"size": [{size}, {size}], "mean": [0.0, 0.0, 0.0], "std": [1.0, 1.0, 1.0]}}
}}
"#
    );
    write_text(&out.join("manifest.json"), &manifest)?;

    // Feature-level convergence fixture as FEAT1 dumps.
    let feature_dir = out.join("features");
    fs::create_dir_all(&feature_dir).map_err(|e| io_err(&feature_dir, e))?;
    let fixture = fixtures::gen_convergence_fixture(
        args.dim,
        args.per_epoch.max(16),
        args.epochs,
        args.seed,
    )?;
    save_features(&fixture.real, &feature_dir.join("real.feat"))?;
    for (epoch, features) in &fixture.epochs {
        save_features(features, &feature_dir.join(epoch_cache_name(*epoch)))?;
    }
    println!("fixture dataset at {}", out.display());
    Ok(())
}
