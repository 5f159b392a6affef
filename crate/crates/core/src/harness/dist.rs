use std::path::Path;

use serde::Serialize;

use super::{
    create_dir, csv_err, csv_writer, mean, prepare_cases, ConfidenceSource, DeepSource, ExperimentSpec, NamedImage,
};
use crate::confidence::{ground_truth_confidence, ConfidenceMap};
use crate::denoisers::DenoiserSpec;
use crate::error::{Error, Result};
use crate::image::NoiseSpec;

/// Histogram bins over `[0, 1]`; the last bin is closed.
pub const DIST_BINS: usize = 20;

/// Confidence statistics for one denoiser at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistRow {
    /// `reliable` or `deep`.
    pub denoiser: String,
    pub sigma: f64,
    pub histogram: Vec<u64>,
    pub regions: usize,
    /// Mean over all regions of all images.
    pub mean_region: f64,
    /// Mean of the per-image means.
    pub mean_image: f64,
}

fn bin_of(c: f64, bins: usize) -> usize {
    ((c * bins as f64).floor() as usize).min(bins - 1)
}

fn summarize(denoiser: &str, sigma: f64, maps: &[ConfidenceMap], bins: usize) -> DistRow {
    let mut histogram = vec![0u64; bins];
    for v in maps.iter().flat_map(|m| m.values()) {
        histogram[bin_of(*v, bins)] += 1;
    }
    DistRow {
        denoiser: denoiser.to_string(),
        sigma,
        histogram,
        regions: maps.iter().map(|m| m.values().len()).sum(),
        mean_region: mean(maps.iter().flat_map(|m| m.values().iter().copied())),
        mean_image: mean(maps.iter().map(ConfidenceMap::mean)),
    }
}

/// Replaces `{sigma}` in a precomputed-output path so each noise level can
/// point at its own directory.
fn deep_at_sigma(deep: &DeepSource, sigma: f64) -> DeepSource {
    match deep {
        DeepSource::Denoiser(DenoiserSpec::ExternalFile { path }) => {
            let p = path.to_string_lossy().replace("{sigma}", &sigma.to_string());
            DeepSource::Denoiser(DenoiserSpec::ExternalFile { path: p.into() })
        }
        other => other.clone(),
    }
}

/// Ground-truth confidence of both denoisers at every Gaussian noise level in
/// `sigmas`. Rows are ordered by sigma, reliable before deep.
pub fn confidence_distribution(
    spec: &ExperimentSpec,
    images: &[NamedImage],
    sigmas: &[f64],
    bins: usize,
) -> Result<Vec<DistRow>> {
    if bins == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin".into()));
    }
    let mut rows = Vec::with_capacity(2 * sigmas.len());
    for &sigma in sigmas {
        let mut s = spec.clone();
        s.noise = NoiseSpec::gaussian(sigma, spec.noise.seed);
        s.deep = deep_at_sigma(&spec.deep, sigma);
        s.conf = ConfidenceSource::None;
        let (cases, _) = prepare_cases(&s, images)?;
        let mut reliable = Vec::with_capacity(cases.len());
        let mut deep = Vec::with_capacity(cases.len());
        for c in &cases {
            reliable.push(ground_truth_confidence(&c.clean, &c.reliable)?);
            deep.push(ground_truth_confidence(&c.clean, &c.deep)?);
        }
        rows.push(summarize("reliable", sigma, &reliable, bins));
        rows.push(summarize("deep", sigma, &deep, bins));
    }
    Ok(rows)
}

/// Writes `conf_hist.csv` and `conf_mean.csv` into `out`.
pub fn write_distribution(rows: &[DistRow], out: &Path) -> Result<()> {
    create_dir(out)?;
    let path = out.join("conf_hist.csv");
    let mut wtr = csv_writer(&path)?;
    wtr.write_record(["denoiser", "sigma", "bin_lo", "bin_hi", "count"])
        .map_err(csv_err)?;
    for r in rows {
        let bins = r.histogram.len() as f64;
        for (i, count) in r.histogram.iter().enumerate() {
            wtr.write_record([
                r.denoiser.clone(),
                r.sigma.to_string(),
                (i as f64 / bins).to_string(),
                ((i + 1) as f64 / bins).to_string(),
                count.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io(&path, e))?;

    let path = out.join("conf_mean.csv");
    let mut wtr = csv_writer(&path)?;
    wtr.write_record(["denoiser", "sigma", "regions", "mean_region", "mean_image"])
        .map_err(csv_err)?;
    for r in rows {
        wtr.write_record([
            r.denoiser.clone(),
            r.sigma.to_string(),
            r.regions.to_string(),
            r.mean_region.to_string(),
            r.mean_image.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(&path, e))
}
