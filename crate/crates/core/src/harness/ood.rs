use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    csv_err, csv_writer, load_dataset, mean, prepare_cases, ConfidenceSource, DeepSource, ExperimentSpec, NamedImage,
    WeightGrid,
};
use crate::error::{Error, Result};
use crate::fusion::{Fuser, FusionMode};
use crate::image::{evaluate, MetricReport, NoiseSpec};

/// Fixed weight of the CCID_d baseline.
pub const CCID_D_WEIGHT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodType {
    DataDomain,
    NoiseLevel,
    NoiseType,
}

impl OodType {
    pub fn as_str(self) -> &'static str {
        match self {
            OodType::DataDomain => "data_domain",
            OodType::NoiseLevel => "noise_level",
            OodType::NoiseType => "noise_type",
        }
    }
}

impl fmt::Display for OodType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for OodType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data_domain" | "data-domain" => Ok(OodType::DataDomain),
            "noise_level" | "noise-level" => Ok(OodType::NoiseLevel),
            "noise_type" | "noise-type" => Ok(OodType::NoiseType),
            _ => Err(Error::Parse(format!("unknown OOD type {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OodCase {
    pub ood_type: OodType,
    pub spec: ExperimentSpec,
}

/// One table row: the four columns for one OOD type and fusion mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OodRow {
    pub ood_type: OodType,
    pub mode: FusionMode,
    pub reliable: MetricReport,
    pub deep: MetricReport,
    pub ccid_d: MetricReport,
    pub ccid: MetricReport,
    /// Grid weight with the highest mean PSNR (lowest on ties).
    pub best_w: f64,
    pub images: usize,
}

fn mean_report(reports: &[MetricReport]) -> MetricReport {
    MetricReport {
        psnr_db: mean(reports.iter().map(|r| r.psnr_db)),
        ssim: mean(reports.iter().map(|r| r.ssim)),
    }
}

/// Evaluates one case on loaded images; one row per requested mode.
pub fn ood_eval_images(case: &OodCase, images: &[NamedImage]) -> Result<Vec<OodRow>> {
    let spec = &case.spec;
    let (cases, _) = prepare_cases(spec, images)?;
    let grid = spec.grid.with_weight(CCID_D_WEIGHT)?;
    let base = cases
        .iter()
        .map(|c| {
            Ok((
                evaluate(&c.reliable.quantized(), &c.clean)?,
                evaluate(&c.deep.quantized(), &c.clean)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let reliable = mean_report(&base.iter().map(|b| b.0).collect::<Vec<_>>());
    let deep = mean_report(&base.iter().map(|b| b.1).collect::<Vec<_>>());

    // per_case[i][m][k]: image i, mode m, grid weight k
    let per_case = cases
        .par_iter()
        .map(|c| {
            let fuser = Fuser::new(c.deep.clone(), c.reliable.clone())?;
            spec.modes
                .iter()
                .map(|&mode| {
                    grid.weights()
                        .iter()
                        .map(|&w| {
                            let fused = fuser.fuse(c.conf.as_ref(), &spec.fusion.with_w(w).with_mode(mode))?;
                            evaluate(&fused.quantized(), &c.clean)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(spec.modes.len());
    for (m, &mode) in spec.modes.iter().enumerate() {
        let curve: Vec<MetricReport> = (0..grid.weights().len())
            .map(|k| mean_report(&per_case.iter().map(|p| p[m][k]).collect::<Vec<_>>()))
            .collect();
        let mut best = 0;
        for (k, r) in curve.iter().enumerate() {
            if r.psnr_db > curve[best].psnr_db {
                best = k;
            }
        }
        let d = grid
            .weights()
            .iter()
            .position(|&w| w == CCID_D_WEIGHT)
            .expect("grid contains the baseline weight");
        rows.push(OodRow {
            ood_type: case.ood_type,
            mode,
            reliable,
            deep,
            ccid_d: curve[d],
            ccid: curve[best],
            best_w: grid.weights()[best],
            images: cases.len(),
        });
    }
    Ok(rows)
}

pub fn ood_eval(cases: &[OodCase]) -> Result<Vec<OodRow>> {
    let mut rows = Vec::new();
    for case in cases {
        let images = load_dataset(&case.spec.dataset)?;
        rows.extend(ood_eval_images(case, &images)?);
    }
    Ok(rows)
}

pub fn write_ood_csv(rows: &[OodRow], path: &Path) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    wtr.write_record([
        "ood_type",
        "mode",
        "reliable_psnr_db",
        "reliable_ssim",
        "deep_psnr_db",
        "deep_ssim",
        "ccid_d_psnr_db",
        "ccid_d_ssim",
        "ccid_psnr_db",
        "ccid_ssim",
        "best_w",
        "images",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.ood_type.to_string(), r.mode.to_string()];
        for m in [r.reliable, r.deep, r.ccid_d, r.ccid] {
            rec.push(m.psnr_db.to_string());
            rec.push(m.ssim.to_string());
        }
        rec.push(r.best_w.to_string());
        rec.push(r.images.to_string());
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// TOML description of an OOD table, one `[[case]]` per row group.
///
/// ```toml
/// seed = 0
///
/// [[case]]
/// ood_type = "noise_level"
/// dataset = "data/fixtures"
/// noise = "gaussian:50"
/// deep = "mock:corrupt_half"
/// modes = ["dwt-conf"]
/// conf = "oracle"
/// ```
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(rename = "case")]
    pub cases: Vec<OodCaseConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodCaseConfig {
    pub ood_type: OodType,
    pub dataset: PathBuf,
    pub noise: Option<String>,
    pub reliable: Option<String>,
    pub deep: String,
    pub modes: Option<Vec<String>>,
    pub grid: Option<String>,
    pub conf: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub clamp_deep: bool,
}

impl OodConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Builds the cases; relative paths are taken from `base`.
    pub fn cases(&self, base: &Path) -> Result<Vec<OodCase>> {
        self.cases
            .iter()
            .map(|c| {
                let mut spec = ExperimentSpec::new(base.join(&c.dataset));
                let seed = c.seed.unwrap_or(self.seed);
                spec.noise = match &c.noise {
                    Some(n) => n.parse::<NoiseSpec>()?,
                    None => spec.noise,
                }
                .with_seed(seed);
                if let Some(r) = &c.reliable {
                    spec.reliable = r.parse()?;
                }
                spec.deep = match c.deep.parse()? {
                    DeepSource::Denoiser(crate::denoisers::DenoiserSpec::ExternalFile { path }) => {
                        DeepSource::Denoiser(crate::denoisers::DenoiserSpec::ExternalFile { path: base.join(path) })
                    }
                    other => other,
                };
                if let Some(modes) = &c.modes {
                    spec.modes = modes.iter().map(|m| m.parse()).collect::<Result<_>>()?;
                }
                if let Some(g) = &c.grid {
                    spec.grid = g.parse::<WeightGrid>()?;
                }
                if let Some(conf) = &c.conf {
                    spec.conf = match conf.parse()? {
                        ConfidenceSource::Model(p) => ConfidenceSource::Model(base.join(p)),
                        ConfidenceSource::File(p) => ConfidenceSource::File(base.join(p)),
                        other => other,
                    };
                }
                spec.clamp_deep = c.clamp_deep;
                spec.save_images = false;
                Ok(OodCase {
                    ood_type: c.ood_type,
                    spec,
                })
            })
            .collect()
    }
}
