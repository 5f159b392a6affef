//! Per-8x8-region confidence in the deep denoiser output.
//!
//! Three sources produce a [`ConfidenceMap`]: the ground-truth target
//! ([`ground_truth_confidence`]), a fitted linear surrogate
//! ([`ConfidenceModel`]) and external map files ([`load_confidence`]).

mod features;
mod model;
mod overlay;

use std::fmt::Write as _;
use std::path::Path;

pub use features::{region_features, RegionFeatures, FEATURE_COUNT};
pub use model::{fit_confidence_model, predict_confidence, ConfidenceModel, FitReport, RIDGE_LAMBDA};
pub use overlay::{render_overlay, render_overlay_png, DEFAULT_OVERLAY_THRESHOLD};

use crate::error::{Error, Result};
use crate::image::{avg_pool8, ImagePlane};
use crate::transforms::TILE;

/// Error level mapped to zero confidence.
pub const SIGMA_MAX: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    grid_width: usize,
    grid_height: usize,
    values: Vec<f64>,
}

impl ConfidenceMap {
    /// Fails if the value count is wrong or any value leaves `[0, 1]`.
    pub fn new(grid_width: usize, grid_height: usize, values: Vec<f64>) -> Result<Self> {
        if grid_width == 0 || grid_height == 0 || values.len() != grid_width * grid_height {
            return Err(Error::InvalidParameter(format!(
                "confidence grid {grid_width}x{grid_height} with {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self {
            grid_width,
            grid_height,
            values,
        })
    }

    pub fn uniform(grid_width: usize, grid_height: usize, value: f64) -> Result<Self> {
        Self::new(grid_width, grid_height, vec![value; grid_width * grid_height])
    }

    /// Grid matching an image of the given size after padding to multiples of 8.
    pub fn grid_for(width: usize, height: usize) -> (usize, usize) {
        (width.div_ceil(TILE), height.div_ceil(TILE))
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.grid_width, self.grid_height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, gx: usize, gy: usize) -> f64 {
        self.values[gy * self.grid_width + gx]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `CMAP <w> <h>` header followed by one line per grid row.
    pub fn to_cmap_string(&self) -> String {
        let mut out = format!("CMAP {} {}\n", self.grid_width, self.grid_height);
        for row in self.values.chunks(self.grid_width) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                // shortest round-trip decimal form; never uses exponent notation
                write!(out, "{v}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_cmap_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty confidence file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("CMAP") {
            return Err(Error::Parse(format!("bad confidence header {header:?}")));
        }
        let dim = |p: Option<&str>| -> Result<usize> {
            p.and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad confidence header {header:?}")))
        };
        let (gw, gh) = (dim(parts.next())?, dim(parts.next())?);
        if parts.next().is_some() {
            return Err(Error::Parse(format!("bad confidence header {header:?}")));
        }
        let mut values = Vec::with_capacity(gw * gh);
        let mut rows = 0;
        for line in lines {
            rows += 1;
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad confidence value {tok:?}")))?,
                );
            }
            if values.len() - before != gw {
                return Err(Error::Parse(format!(
                    "confidence row {rows} has {} values, header says {gw}",
                    values.len() - before
                )));
            }
        }
        if rows != gh {
            return Err(Error::Parse(format!("{rows} confidence rows, header says {gh}")));
        }
        Self::new(gw, gh, values)
    }
}

pub fn save_confidence(map: &ConfidenceMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, map.to_cmap_string()).map_err(|e| Error::io(path, e))
}

pub fn load_confidence(path: impl AsRef<Path>) -> Result<ConfidenceMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConfidenceMap::from_cmap_str(&text)
}

/// Target confidence of a deep output against the clean image:
/// `1 - avgpool8(|y_gt - y_dnn|) / 100`, clamped to `[0, 1]`.
///
/// Inputs whose sides are not multiples of 8 are reflect-padded first.
pub fn ground_truth_confidence(y_gt: &ImagePlane, y_dnn: &ImagePlane) -> Result<ConfidenceMap> {
    y_gt.ensure_same_dims(y_dnn)?;
    let err = y_gt.zip_map(y_dnn, |a, b| (a - b).abs())?.pad_to_multiple(TILE);
    let pooled = avg_pool8(&err)?;
    let values = pooled
        .data()
        .iter()
        .map(|e| (1.0 - e / SIGMA_MAX).clamp(0.0, 1.0))
        .collect();
    ConfidenceMap::new(pooled.width(), pooled.height(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img() -> ImagePlane {
        ImagePlane::from_fn(32, 24, |x, y| ((x * 37 + y * 11) % 200) as f64)
    }

    #[test]
    fn perfect_output_full_confidence() {
        let c = ground_truth_confidence(&img(), &img()).unwrap();
        assert_eq!(c.dims(), (4, 3));
        assert!(c.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn uniform_errors() {
        for (delta, want) in [(10.0, 0.9), (50.0, 0.5), (150.0, 0.0), (100.0, 0.0)] {
            let c = ground_truth_confidence(&img(), &img().map(|v| v - delta)).unwrap();
            assert!(c.values().iter().all(|v| (v - want).abs() < 1e-9), "delta {delta}");
        }
    }

    #[test]
    fn ragged_images_are_padded() {
        let a = ImagePlane::filled(20, 9, 5.0);
        let c = ground_truth_confidence(&a, &a.map(|v| v + 20.0)).unwrap();
        assert_eq!(c.dims(), (3, 2));
        assert!(c.values().iter().all(|v| (v - 0.8).abs() < 1e-12));
    }

    #[test]
    fn mismatch_rejected() {
        assert!(ground_truth_confidence(&ImagePlane::zeros(8, 8), &ImagePlane::zeros(16, 8)).is_err());
    }

    #[test]
    fn cmap_round_trip_and_errors() {
        let map = ConfidenceMap::new(3, 2, vec![0.0, 0.123456789012, 1.0, 0.5, 1e-7, 0.999999999]).unwrap();
        let text = map.to_cmap_string();
        assert!(text.starts_with("CMAP 3 2\n"));
        assert_eq!(ConfidenceMap::from_cmap_str(&text).unwrap(), map);

        assert!(ConfidenceMap::from_cmap_str("CMAP 2 2\n0.1 0.2\n0.3\n").is_err());
        assert!(ConfidenceMap::from_cmap_str("CMAP 2 1\n0.1 0.2\n0.3 0.4\n").is_err());
        assert!(ConfidenceMap::from_cmap_str("CMAP 1 1\n1.2\n").is_err());
        assert!(ConfidenceMap::from_cmap_str("MAP 1 1\n0.5\n").is_err());
        assert!(ConfidenceMap::from_cmap_str("CMAP 1 1\nabc\n").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cmap");
        let map = ConfidenceMap::new(2, 2, vec![0.25, 0.5, 0.75, 1.0]).unwrap();
        save_confidence(&map, &p).unwrap();
        assert_eq!(load_confidence(&p).unwrap(), map);
    }

    proptest! {
        #[test]
        fn cmap_lossless(values in proptest::collection::vec(0.0f64..=1.0, 12)) {
            let map = ConfidenceMap::new(4, 3, values).unwrap();
            let back = ConfidenceMap::from_cmap_str(&map.to_cmap_string()).unwrap();
            for (a, b) in map.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn symmetric_and_bounded(seed in any::<u64>()) {
            let a = img();
            let b = a.map(|v| v + ((seed as f64 + v).sin() * 180.0));
            let ab = ground_truth_confidence(&a, &b).unwrap();
            prop_assert_eq!(&ab, &ground_truth_confidence(&b, &a).unwrap());
            prop_assert!(ab.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn constant_offset_law(delta in 0.0f64..250.0) {
            let a = img();
            let c = ground_truth_confidence(&a, &a.map(|v| v + delta)).unwrap();
            let want = (1.0 - delta / 100.0).clamp(0.0, 1.0);
            prop_assert!(c.values().iter().all(|v| (v - want).abs() < 1e-9));
        }

        #[test]
        fn larger_error_never_raises_confidence(seed in any::<u64>(), grow in 0.0f64..50.0) {
            let a = img();
            let err = |x: usize, y: usize| (seed.wrapping_mul(x as u64 + 1).wrapping_add(y as u64) % 97) as f64;
            let b = ImagePlane::from_fn(32, 24, |x, y| a.get(x, y) + err(x, y));
            let c = ImagePlane::from_fn(32, 24, |x, y| a.get(x, y) + err(x, y) + if (x + y) % 3 == 0 { grow } else { 0.0 });
            let cb = ground_truth_confidence(&a, &b).unwrap();
            let cc = ground_truth_confidence(&a, &c).unwrap();
            for (p, q) in cb.values().iter().zip(cc.values()) {
                prop_assert!(q <= p);
            }
        }
    }
}
