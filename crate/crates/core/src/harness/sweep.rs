use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    create_dir, csv_err, csv_writer, load_dataset, mean, prepare_cases, write_failures, Case, ExperimentSpec, Failure,
    NamedImage,
};
use crate::confidence::save_confidence;
use crate::error::{Error, Result};
use crate::fusion::{Fuser, FusionMode};
use crate::image::{evaluate, save_image, write_metrics_csv, MetricReport};

/// Dataset-mean metrics at one grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub w: f64,
    pub mode: FusionMode,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageRow {
    pub image: String,
    pub w: f64,
    pub mode: FusionMode,
    /// Metrics of the 8-bit quantized output.
    pub quantized: MetricReport,
    /// Metrics of the float output.
    pub float: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    /// Means over 8-bit outputs, `w` major, modes in request order.
    pub rows: Vec<SweepRow>,
    /// Same grid, float outputs.
    pub float_rows: Vec<SweepRow>,
    pub images: Vec<ImageRow>,
    pub failures: Vec<Failure>,
}

impl SweepReport {
    /// The row for `(w, mode)` in the 8-bit table.
    pub fn row(&self, w: f64, mode: FusionMode) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.w == w && r.mode == mode)
    }

    pub fn curve(&self, mode: FusionMode) -> Vec<SweepRow> {
        self.rows.iter().filter(|r| r.mode == mode).copied().collect()
    }
}

/// Loads the dataset, runs the sweep and writes every output when
/// `spec.out` is set.
pub fn weight_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    let images = load_dataset(&spec.dataset)?;
    let report = sweep_images(spec, &images)?;
    if let Some(out) = &spec.out {
        write_sweep(&report, out)?;
    }
    Ok(report)
}

fn weight_tag(w: f64) -> String {
    format!("w{w}")
}

fn sweep_case(spec: &ExperimentSpec, case: &Case) -> Result<Vec<ImageRow>> {
    let fuser = Fuser::new(case.deep.clone(), case.reliable.clone())?;
    let image_dir = spec
        .out
        .as_ref()
        .filter(|_| spec.save_images)
        .map(|o| o.join("fused").join(&case.name));
    if let Some(dir) = &image_dir {
        create_dir(dir)?;
    }
    let mut rows = Vec::with_capacity(spec.grid.weights().len() * spec.modes.len());
    for &w in spec.grid.weights() {
        for &mode in &spec.modes {
            let params = spec.fusion.with_w(w).with_mode(mode);
            let fused = fuser.fuse(case.conf.as_ref(), &params)?;
            let quantized = fused.quantized();
            if let Some(dir) = &image_dir {
                save_image(&quantized, dir.join(format!("{mode}_{}.png", weight_tag(w))))?;
            }
            rows.push(ImageRow {
                image: case.name.clone(),
                w,
                mode,
                quantized: evaluate(&quantized, &case.clean)?,
                float: evaluate(&fused, &case.clean)?,
            });
        }
    }
    Ok(rows)
}

/// Sweeps already-loaded images. Fused PNGs and confidence maps are written
/// under `spec.out` when it is set; CSVs are left to [`write_sweep`].
pub fn sweep_images(spec: &ExperimentSpec, images: &[NamedImage]) -> Result<SweepReport> {
    let (cases, failures) = prepare_cases(spec, images)?;
    if let Some(out) = &spec.out {
        let dir = out.join("confidence");
        for case in &cases {
            if let Some(conf) = &case.conf {
                create_dir(&dir)?;
                save_confidence(conf, dir.join(format!("{}.cmap", case.name)))?;
            }
        }
    }
    let per_case = cases
        .par_iter()
        .map(|c| sweep_case(spec, c))
        .collect::<Result<Vec<_>>>()?;
    let points = spec.grid.weights().len() * spec.modes.len();
    let aggregate = |pick: fn(&ImageRow) -> MetricReport| -> Vec<SweepRow> {
        (0..points)
            .map(|k| {
                let first = &per_case[0][k];
                SweepRow {
                    w: first.w,
                    mode: first.mode,
                    psnr_db: mean(per_case.iter().map(|rows| pick(&rows[k]).psnr_db)),
                    ssim: mean(per_case.iter().map(|rows| pick(&rows[k]).ssim)),
                }
            })
            .collect()
    };
    Ok(SweepReport {
        rows: aggregate(|r| r.quantized),
        float_rows: aggregate(|r| r.float),
        images: per_case.into_iter().flatten().collect(),
        failures,
    })
}

fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv_writer(path)?;
    wtr.write_record(["w", "mode", "psnr_db", "ssim"]).map_err(csv_err)?;
    for r in rows {
        wtr.write_record([
            r.w.to_string(),
            r.mode.to_string(),
            r.psnr_db.to_string(),
            r.ssim.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Writes `sweep.csv`, `sweep_float.csv`, `per_image.csv`,
/// `metrics/<mode>_w<w>.csv` and `failures.csv` into `out`.
pub fn write_sweep(report: &SweepReport, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_rows(&out.join("sweep.csv"), &report.rows)?;
    write_rows(&out.join("sweep_float.csv"), &report.float_rows)?;

    let path = out.join("per_image.csv");
    let mut wtr = csv_writer(&path)?;
    wtr.write_record(["image", "w", "mode", "psnr_db", "ssim", "psnr_db_float", "ssim_float"])
        .map_err(csv_err)?;
    for r in &report.images {
        wtr.write_record([
            r.image.clone(),
            r.w.to_string(),
            r.mode.to_string(),
            r.quantized.psnr_db.to_string(),
            r.quantized.ssim.to_string(),
            r.float.psnr_db.to_string(),
            r.float.ssim.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(&path, e))?;

    let metrics_dir = out.join("metrics");
    create_dir(&metrics_dir)?;
    for row in &report.rows {
        let path = metrics_dir.join(format!("{}_{}.csv", row.mode, weight_tag(row.w)));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let rows = report
            .images
            .iter()
            .filter(|r| r.w == row.w && r.mode == row.mode)
            .map(|r| (r.image.as_str(), r.quantized));
        write_metrics_csv(std::io::BufWriter::new(file), rows)?;
    }
    write_failures(&out.join("failures.csv"), &report.failures)
}
