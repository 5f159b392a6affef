//! Batch experiments over a directory of clean grayscale images.
//!
//! Every image goes through the same pipeline: synthetic noise (seed
//! `noise.seed + index`), the reliable filter, the deep branch, an optional
//! confidence map, then fusion over a weight grid. Per-image work may run in
//! parallel but results are always merged in dataset order.

mod dist;
mod ood;
mod sweep;
mod train;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dist::{confidence_distribution, write_distribution, DistRow, DIST_BINS};
pub use ood::{ood_eval, ood_eval_images, write_ood_csv, OodCase, OodConfig, OodRow, OodType, CCID_D_WEIGHT};
pub use sweep::{sweep_images, weight_sweep, write_sweep, ImageRow, SweepReport, SweepRow};
pub use train::{
    confidence_mae, default_confidence_model, default_training_specs, train_confidence_model, training_data,
    TrainingReport,
};

use crate::confidence::{
    ground_truth_confidence, load_confidence, predict_confidence, region_features, ConfidenceMap, ConfidenceModel,
};
use crate::denoisers::{gaussian_filter, run_deep_denoiser_with, DeepOutput, DenoiseContext, DenoiserSpec};
use crate::error::{Error, Result};
use crate::fusion::{FusionMode, FusionParams};
use crate::image::{add_noise, load_image, ImagePlane, NoiseSpec, MIN_SIDE};

/// Sorted, duplicate-free fusion weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightGrid(Vec<f64>);

impl WeightGrid {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("empty weight grid".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidParameter(format!("grid weight {w} outside [0, 1]")));
        }
        if weights.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::InvalidParameter(
                "grid weights must be strictly increasing".into(),
            ));
        }
        Ok(Self(weights))
    }

    /// `start, start + step, ...` up to and including `stop` (within 1e-9).
    /// Values are rounded to 9 decimals so `0:1:0.05` prints cleanly.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || stop < start {
            return Err(Error::InvalidParameter(format!("bad grid range {start}:{stop}:{step}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let weights = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
            .collect();
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    /// The grid with `w` added if missing.
    pub fn with_weight(&self, w: f64) -> Result<Self> {
        let mut v = self.0.clone();
        if !v.contains(&w) {
            v.push(w);
            v.sort_by(f64::total_cmp);
        }
        Self::new(v)
    }
}

impl Default for WeightGrid {
    fn default() -> Self {
        Self::range(0.0, 1.0, 0.05).expect("valid default grid")
    }
}

impl TryFrom<Vec<f64>> for WeightGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightGrid> for Vec<f64> {
    fn from(g: WeightGrid) -> Self {
        g.0
    }
}

/// Parses `start:stop:step`, a comma list, or a single weight.
impl FromStr for WeightGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad weight {t:?} in grid {s:?}")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [a, b, c] => Self::range(num(a)?, num(b)?, num(c)?),
            [_] => Self::new(s.split(',').map(num).collect::<Result<_>>()?),
            _ => Err(Error::Parse(format!("bad weight grid {s:?}"))),
        }
    }
}

impl fmt::Display for WeightGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Where the deep image comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeepSource {
    /// The clean image itself, as in the controllability protocol.
    Clean,
    Denoiser(DenoiserSpec),
}

impl FromStr for DeepSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(DeepSource::Clean),
            _ => Ok(DeepSource::Denoiser(s.parse()?)),
        }
    }
}

impl fmt::Display for DeepSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeepSource::Clean => f.write_str("clean"),
            DeepSource::Denoiser(spec) => spec.fmt(f),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum ConfidenceSource {
    /// Ground-truth confidence against the clean image.
    Oracle,
    /// A fitted surrogate stored as JSON.
    Model(PathBuf),
    /// Precomputed `<dir>/<stem>.cmap` files.
    File(PathBuf),
    #[default]
    None,
}

impl ConfidenceSource {
    pub fn tag(&self) -> &'static str {
        match self {
            ConfidenceSource::Oracle => "oracle",
            ConfidenceSource::Model(_) => "model",
            ConfidenceSource::File(_) => "external",
            ConfidenceSource::None => "none",
        }
    }
}

impl FromStr for ConfidenceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match (kind, rest.is_empty()) {
            ("oracle", true) => Ok(ConfidenceSource::Oracle),
            ("none", true) => Ok(ConfidenceSource::None),
            ("model", false) => Ok(ConfidenceSource::Model(rest.into())),
            ("file", false) => Ok(ConfidenceSource::File(rest.into())),
            _ => Err(Error::Parse(format!("bad confidence source {s:?}"))),
        }
    }
}

impl fmt::Display for ConfidenceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfidenceSource::Model(p) => write!(f, "model:{}", p.display()),
            ConfidenceSource::File(p) => write!(f, "file:{}", p.display()),
            other => f.write_str(other.tag()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedImage {
    pub name: String,
    pub image: ImagePlane,
}

impl NamedImage {
    pub fn new(name: impl Into<String>, image: ImagePlane) -> Self {
        Self {
            name: name.into(),
            image,
        }
    }
}

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "pnm"))
}

/// Loads every PNG/PGM in `dir`, ordered by file name. Names are file stems.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<NamedImage>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_image_file(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no PNG or PGM images in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
            Ok(NamedImage::new(name, load_image(p)?))
        })
        .collect()
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    /// Noise model; its seed is the base seed, offset by the image index.
    pub noise: NoiseSpec,
    pub reliable: DenoiserSpec,
    pub deep: DeepSource,
    /// Shared fusion constants; `w` and `mode` are overridden per grid point.
    pub fusion: FusionParams,
    pub modes: Vec<FusionMode>,
    pub grid: WeightGrid,
    pub conf: ConfidenceSource,
    pub out: Option<PathBuf>,
    /// Clamp the deep output to `[0, 255]` before fusion.
    pub clamp_deep: bool,
    /// Allow external commands to run for several images at once.
    pub parallel_external: bool,
    /// Write a PNG per fused image.
    pub save_images: bool,
}

impl ExperimentSpec {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            noise: NoiseSpec::gaussian(25.0, 0),
            reliable: DenoiserSpec::GaussianFilter { sigma: 4.0 },
            deep: DeepSource::Denoiser(DenoiserSpec::Mock {
                mode: crate::denoisers::MockMode::Identity,
            }),
            fusion: FusionParams::default(),
            modes: vec![FusionMode::Dct],
            grid: WeightGrid::default(),
            conf: ConfidenceSource::None,
            out: None,
            clamp_deep: false,
            parallel_external: false,
            save_images: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.reliable.validate()?;
        if let DeepSource::Denoiser(d) = &self.deep {
            d.validate()?;
        }
        self.fusion.validate()?;
        if self.modes.is_empty() {
            return Err(Error::InvalidParameter("no fusion modes requested".into()));
        }
        Ok(())
    }
}

/// One image after the denoising and confidence stages.
#[derive(Clone, Debug)]
pub struct Case {
    pub name: String,
    pub clean: ImagePlane,
    pub noisy: ImagePlane,
    pub reliable: ImagePlane,
    pub deep: ImagePlane,
    pub noise_map: ImagePlane,
    pub conf: Option<ConfidenceMap>,
}

/// A per-image failure that did not abort the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub image: String,
    pub error: String,
    /// Captured stderr of a failing external command, empty otherwise.
    pub stderr: String,
}

/// Reliable branch. The Gaussian filter output is used as is; any other
/// denoiser goes through the adapter.
pub fn run_reliable(spec: &DenoiserSpec, noisy: &ImagePlane, ctx: &DenoiseContext<'_>) -> Result<ImagePlane> {
    match spec {
        DenoiserSpec::GaussianFilter { sigma } => gaussian_filter(noisy, *sigma),
        other => Ok(run_deep_denoiser_with(other, noisy, ctx)?.denoised),
    }
}

pub(crate) enum ConfidenceResolver {
    Oracle,
    Model(ConfidenceModel),
    File(PathBuf),
    None,
}

impl ConfidenceResolver {
    pub(crate) fn new(source: &ConfidenceSource) -> Result<Self> {
        Ok(match source {
            ConfidenceSource::Oracle => Self::Oracle,
            ConfidenceSource::Model(p) => Self::Model(ConfidenceModel::load(p)?),
            ConfidenceSource::File(dir) => Self::File(dir.clone()),
            ConfidenceSource::None => Self::None,
        })
    }

    fn resolve(
        &self,
        name: &str,
        clean: &ImagePlane,
        reliable: &ImagePlane,
        noisy: &ImagePlane,
        deep: &DeepOutput,
    ) -> Result<Option<ConfidenceMap>> {
        let map = match self {
            Self::Oracle => ground_truth_confidence(clean, &deep.denoised)?,
            Self::Model(model) => predict_confidence(model, &region_features(noisy, reliable, &deep.noise_map)?)?,
            Self::File(dir) => {
                let map = load_confidence(dir.join(format!("{name}.cmap")))?;
                let expected = ConfidenceMap::grid_for(clean.width(), clean.height());
                if map.dims() != expected {
                    return Err(Error::mismatch(expected, map.dims()));
                }
                map
            }
            Self::None => return Ok(None),
        };
        Ok(Some(map))
    }
}

fn prepare_case(spec: &ExperimentSpec, conf: &ConfidenceResolver, index: usize, img: &NamedImage) -> Result<Case> {
    let clean = &img.image;
    clean.ensure_min_size(MIN_SIDE)?;
    let noisy = add_noise(clean, &spec.noise.with_seed(spec.noise.seed.wrapping_add(index as u64)))?;
    let ctx = DenoiseContext {
        image_name: Some(&img.name),
        reference: Some(clean),
    };
    let reliable = run_reliable(&spec.reliable, &noisy, &ctx)?;
    let mut deep = match &spec.deep {
        DeepSource::Clean => DeepOutput::from_denoised(&noisy, clean)?,
        DeepSource::Denoiser(d) => run_deep_denoiser_with(d, &noisy, &ctx)?,
    };
    if spec.clamp_deep {
        deep = DeepOutput::from_denoised(&noisy, &deep.denoised.map(|v| v.clamp(0.0, 255.0)))?;
    }
    let conf = conf.resolve(&img.name, clean, &reliable, &noisy, &deep)?;
    Ok(Case {
        name: img.name.clone(),
        clean: clean.clone(),
        noisy,
        reliable,
        deep: deep.denoised,
        noise_map: deep.noise_map,
        conf,
    })
}

/// Runs the denoising stages for every image. Failed images are reported and
/// skipped; the rest keep dataset order.
pub fn prepare_cases(spec: &ExperimentSpec, images: &[NamedImage]) -> Result<(Vec<Case>, Vec<Failure>)> {
    spec.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let conf = ConfidenceResolver::new(&spec.conf)?;
    let serial = matches!(&spec.deep, DeepSource::Denoiser(DenoiserSpec::ExternalCommand { .. }))
        || matches!(&spec.reliable, DenoiserSpec::ExternalCommand { .. });
    let run = |(i, img): (usize, &NamedImage)| prepare_case(spec, &conf, i, img);
    let results: Vec<Result<Case>> = if serial && !spec.parallel_external {
        images.iter().enumerate().map(run).collect()
    } else {
        images.par_iter().enumerate().map(run).collect()
    };
    let mut cases = Vec::new();
    let mut failures = Vec::new();
    for (img, r) in images.iter().zip(results) {
        match r {
            Ok(c) => cases.push(c),
            Err(e) => failures.push(Failure {
                image: img.name.clone(),
                error: e.to_string(),
                stderr: match &e {
                    Error::External { stderr, .. } => stderr.clone(),
                    _ => String::new(),
                },
            }),
        }
    }
    if cases.is_empty() {
        let detail = failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(Error::InvalidParameter(format!(
            "every image failed; first error: {detail}"
        )));
    }
    Ok((cases, failures))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub(crate) fn write_failures(path: &Path, failures: &[Failure]) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    wtr.write_record(["image", "error", "stderr"]).map_err(csv_err)?;
    for f in failures {
        wtr.write_record([&f.image, &f.error, &f.stderr]).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}
