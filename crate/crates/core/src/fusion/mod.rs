//! Frequency-domain fusion of a deep output with a reliable (blurred) image.
//!
//! The user weight `w` moves the result from the reliable image (`w = 0`) to
//! the deep image (`w = 1`). Low frequencies of the deep image are adopted
//! first: the DCT mask and the `low_first` wavelet schedule both weight a
//! frequency `r` (normalized to `[0, 1]`) by `exp(-r^2 / 2s)` with
//! `s = a (1 / (1 - w + eps) - 1)`.

mod engines;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use engines::{DctFusion, DwtFusion, Fuser, TiledDwtFusion, TILE_LEVELS};

use crate::confidence::ConfidenceMap;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::transforms::Wavelet;

/// Lower bound applied to the mask spread for `0 < w` when it underflows.
const MIN_SPREAD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Full-image DCT with a Gaussian frequency mask.
    #[default]
    Dct,
    /// Full-image multi-level DWT, band-wise blend.
    Dwt,
    /// 8x8 patch-wise Haar DWT, weight modulated per region by confidence.
    DwtConf,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Dct, FusionMode::Dwt, FusionMode::DwtConf];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Dct => "dct",
            FusionMode::Dwt => "dwt",
            FusionMode::DwtConf => "dwt-conf",
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct" => Ok(FusionMode::Dct),
            "dwt" | "dwt_global" => Ok(FusionMode::Dwt),
            "dwt-conf" | "dwt_conf" | "dwt_confidence" => Ok(FusionMode::DwtConf),
            _ => Err(Error::Parse(format!("unknown fusion mode {s:?}"))),
        }
    }
}

/// How the scalar weight maps to per-band wavelet weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Every band gets `w`; equivalent to spatial alpha blending.
    Uniform,
    /// Bands ranked coarse to fine and weighted like the DCT mask.
    #[default]
    LowFirst,
}

impl Schedule {
    pub fn as_str(self) -> &'static str {
        match self {
            Schedule::Uniform => "uniform",
            Schedule::LowFirst => "low-first",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Schedule::Uniform),
            "low-first" | "low_first" => Ok(Schedule::LowFirst),
            _ => Err(Error::Parse(format!("unknown schedule {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// User fusion weight in `[0, 1]`.
    pub w: f64,
    /// Mask scale.
    pub a: f64,
    /// Offset keeping the mask spread finite near `w = 1`.
    pub eps: f64,
    /// Confidence threshold of the region-weight law.
    pub t: f64,
    pub mode: FusionMode,
    pub schedule: Schedule,
    /// Wavelet of the full-image DWT; the patch-wise path is always Haar.
    pub wavelet: Wavelet,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            w: 0.5,
            a: 0.1,
            eps: 1e-3,
            t: 0.8,
            mode: FusionMode::Dct,
            schedule: Schedule::LowFirst,
            wavelet: Wavelet::Haar,
        }
    }
}

impl FusionParams {
    pub fn with_w(self, w: f64) -> Self {
        Self { w, ..self }
    }

    pub fn with_mode(self, mode: FusionMode) -> Self {
        Self { mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if !(0.0..=1.0).contains(&self.w) {
            return bad(format!("fusion weight {} outside [0, 1]", self.w));
        }
        if !(self.a > 0.0) {
            return bad(format!("mask scale {} must be positive", self.a));
        }
        if !(self.eps > 0.0) {
            return bad(format!("offset {} must be positive", self.eps));
        }
        if !(self.t > 0.0 && self.t < 1.0) {
            return bad(format!("confidence threshold {} outside (0, 1)", self.t));
        }
        Ok(())
    }
}

/// Spread `s = a (1 / (1 - w + eps) - 1)` of the Gaussian frequency mask.
pub fn mask_spread(w: f64, a: f64, eps: f64) -> f64 {
    a * (1.0 / (1.0 - w + eps) - 1.0)
}

/// Weight given to the deep image at squared normalized frequency `r2`.
/// Exactly 0 at `w = 0` and exactly 1 at `w = 1`.
pub fn frequency_weight(w: f64, r2: f64, a: f64, eps: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if w >= 1.0 {
        return 1.0;
    }
    let s = mask_spread(w, a, eps).max(MIN_SPREAD);
    (-r2 / (2.0 * s)).exp()
}

/// Per-coefficient deep-image weight over a DCT spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionMask {
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f64>,
}

impl FusionMask {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.weights[v * self.width + u]
    }
}

/// Frequency index normalized to `[0, 1]`.
pub(crate) fn normalized_frequency(index: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        index as f64 / (len - 1) as f64
    }
}

pub fn dct_fusion_mask(width: usize, height: usize, params: &FusionParams) -> Result<FusionMask> {
    params.validate()?;
    let mut weights = Vec::with_capacity(width * height);
    for v in 0..height {
        let fy = normalized_frequency(v, height);
        for u in 0..width {
            let fx = normalized_frequency(u, width);
            weights.push(frequency_weight(params.w, fx * fx + fy * fy, params.a, params.eps));
        }
    }
    Ok(FusionMask { width, height, weights })
}

/// Frequency rank of a wavelet band: 0 for the approximation, `(L - l + 1) / L`
/// for details at level `l` (1 = finest) of `L`.
pub fn band_rank(level: Option<usize>, levels: usize) -> f64 {
    match level {
        None => 0.0,
        Some(l) => (levels - l + 1) as f64 / levels as f64,
    }
}

/// Deep-image weight of one wavelet band.
pub fn band_weight(w: f64, schedule: Schedule, rank: f64, params: &FusionParams) -> f64 {
    match schedule {
        Schedule::Uniform => w,
        Schedule::LowFirst => frequency_weight(w, rank * rank, params.a, params.eps),
    }
}

/// Confidence-modulated region weight `w (1 + c - t)`, clamped to `[0, 1]`.
pub fn region_weight(w: f64, c: f64, t: f64) -> f64 {
    (w * (1.0 + c - t)).clamp(0.0, 1.0)
}

pub fn fuse_dct(deep: &ImagePlane, reliable: &ImagePlane, params: &FusionParams) -> Result<ImagePlane> {
    DctFusion::new(deep, reliable)?.fuse(params)
}

pub fn fuse_dwt(deep: &ImagePlane, reliable: &ImagePlane, params: &FusionParams) -> Result<ImagePlane> {
    DwtFusion::new(deep, reliable, params.wavelet)?.fuse(params)
}

/// Patch-wise DWT fusion with every region at the global weight.
pub fn fuse_dwt_tiled(deep: &ImagePlane, reliable: &ImagePlane, params: &FusionParams) -> Result<ImagePlane> {
    TiledDwtFusion::new(deep, reliable)?.fuse(None, params)
}

pub fn fuse_dwt_confidence(
    deep: &ImagePlane,
    reliable: &ImagePlane,
    conf: &ConfidenceMap,
    params: &FusionParams,
) -> Result<ImagePlane> {
    TiledDwtFusion::new(deep, reliable)?.fuse(Some(conf), params)
}

/// Dispatches on `params.mode`. `DwtConf` without a map runs unguided.
pub fn fuse(
    deep: &ImagePlane,
    reliable: &ImagePlane,
    conf: Option<&ConfidenceMap>,
    params: &FusionParams,
) -> Result<ImagePlane> {
    match params.mode {
        FusionMode::Dct => fuse_dct(deep, reliable, params),
        FusionMode::Dwt => fuse_dwt(deep, reliable, params),
        FusionMode::DwtConf => TiledDwtFusion::new(deep, reliable)?.fuse(conf, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spread_at_half() {
        // 0.1 * (1 / 0.501 - 1) = 0.1 * 0.499 / 0.501
        let s = mask_spread(0.5, 0.1, 1e-3);
        assert!((s - 0.0499 / 0.501).abs() < 1e-15);
        assert!((s - 0.099_600_8).abs() < 1e-7);
    }

    #[test]
    fn mask_limits() {
        let p = FusionParams::default();
        let m = dct_fusion_mask(16, 8, &p).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        let zero = dct_fusion_mask(16, 8, &p.with_w(0.0)).unwrap();
        assert!(zero.weights.iter().all(|&v| v == 0.0));
        let one = dct_fusion_mask(16, 8, &p.with_w(1.0)).unwrap();
        assert!(one.weights.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_decreases_with_frequency() {
        let m = dct_fusion_mask(32, 32, &FusionParams::default().with_w(0.3)).unwrap();
        let mut cells: Vec<(f64, f64)> = (0..32 * 32)
            .map(|i| {
                let (u, v) = (i % 32, i / 32);
                let r2 = normalized_frequency(u, 32).powi(2) + normalized_frequency(v, 32).powi(2);
                (r2, m.weights[i])
            })
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in cells.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-15);
        }
    }

    #[test]
    fn high_corner_negligible_at_low_weight() {
        let m = dct_fusion_mask(64, 64, &FusionParams::default().with_w(0.1)).unwrap();
        assert!(m.get(63, 63) < 1e-4);
    }

    #[test]
    fn region_weight_values() {
        assert_eq!(region_weight(0.4, 0.8, 0.8), 0.4);
        assert!((region_weight(0.5, 0.9, 0.8) - 0.55).abs() < 1e-12);
        assert_eq!(region_weight(0.9, 1.0, 0.8), 1.0);
        assert_eq!(region_weight(0.0, 1.0, 0.8), 0.0);
    }

    #[test]
    fn band_ranks() {
        assert_eq!(band_rank(None, 3), 0.0);
        assert_eq!(band_rank(Some(1), 3), 1.0);
        assert!((band_rank(Some(3), 3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn parse_names() {
        for m in FusionMode::ALL {
            assert_eq!(m.as_str().parse::<FusionMode>().unwrap(), m);
        }
        assert_eq!("low-first".parse::<Schedule>().unwrap(), Schedule::LowFirst);
        assert_eq!("uniform".parse::<Schedule>().unwrap(), Schedule::Uniform);
        assert!("fft".parse::<FusionMode>().is_err());
    }

    #[test]
    fn invalid_params() {
        let p = FusionParams::default();
        assert!(p.with_w(1.2).validate().is_err());
        assert!(FusionParams { a: 0.0, ..p }.validate().is_err());
        assert!(FusionParams { eps: 0.0, ..p }.validate().is_err());
        assert!(FusionParams { t: 1.0, ..p }.validate().is_err());
    }

    proptest! {
        #[test]
        fn weight_monotone_in_w(r2 in 0.0f64..2.0, w1 in 0.0f64..=1.0, w2 in 0.0f64..=1.0) {
            let (lo, hi) = if w1 <= w2 { (w1, w2) } else { (w2, w1) };
            prop_assert!(frequency_weight(lo, r2, 0.1, 1e-3) <= frequency_weight(hi, r2, 0.1, 1e-3));
        }

        #[test]
        fn region_weight_monotone_in_confidence(w in 0.0f64..=1.0, c1 in 0.0f64..=1.0, c2 in 0.0f64..=1.0, t in 0.01f64..0.99) {
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            prop_assert!(region_weight(w, lo, t) <= region_weight(w, hi, t));
            prop_assert!((0.0..=1.0).contains(&region_weight(w, hi, t)));
        }
    }
}
