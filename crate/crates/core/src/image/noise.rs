//! Seeded noise synthesis.
//!
//! Every generator is a ChaCha8 stream seeded from [`NoiseSpec::seed`] and
//! consumed in raster order, so identical `(image, spec)` pairs give
//! bit-identical outputs on every platform. Outputs are snapped to a dyadic
//! grid of [`SAMPLE_GRID`] so residuals formed later (`noisy - denoised`) are
//! exact in floating point.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::ImagePlane;
use crate::error::{Error, Result};

/// Spacing of the intensity grid noisy samples live on (2^-20).
pub const SAMPLE_GRID: f64 = 1.0 / (1u64 << 20) as f64;

/// Rounds to the nearest multiple of [`SAMPLE_GRID`].
#[inline]
pub fn snap_to_grid(v: f64) -> f64 {
    (v * (1u64 << 20) as f64).round() * SAMPLE_GRID
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Standard deviation in intensity units (Gaussian only).
    pub sigma: f64,
    /// Expected photon count at intensity 255 (Poisson only).
    pub peak: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma,
            peak: 1.0,
            seed,
        }
    }

    pub fn poisson(peak: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Poisson,
            sigma: 0.0,
            peak,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Gaussian if !(0.0..=100.0).contains(&self.sigma) => Err(Error::InvalidParameter(format!(
                "sigma {} outside [0, 100]",
                self.sigma
            ))),
            NoiseKind::Poisson if !(self.peak > 0.0 && self.peak.is_finite()) => Err(Error::InvalidParameter(format!(
                "poisson peak {} must be positive",
                self.peak
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::Gaussian => write!(f, "gaussian:{}", self.sigma),
            NoiseKind::Poisson => write!(f, "poisson:{}", self.peak),
        }
    }
}

/// Parses `gaussian:<sigma>`, `poisson:<peak>` or `none` (Gaussian, sigma 0).
/// The seed is left at 0.
impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s.split_once(':').unwrap_or((s, ""));
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad noise value in {s:?}")))
        };
        let spec = match kind {
            "none" => NoiseSpec::gaussian(0.0, 0),
            "gaussian" => NoiseSpec::gaussian(number()?, 0),
            "poisson" => NoiseSpec::poisson(number()?, 0),
            _ => return Err(Error::Parse(format!("unknown noise kind in {s:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every pixel. Not clamped.
pub fn add_awgn(img: &ImagePlane, spec: &NoiseSpec) -> Result<ImagePlane> {
    if spec.kind != NoiseKind::Gaussian {
        return Err(Error::InvalidParameter("add_awgn needs a gaussian noise spec".into()));
    }
    spec.validate()?;
    if spec.sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(img.map(|v| snap_to_grid(v + normal.sample(&mut rng))))
}

/// Photon-count noise: each pixel `y` becomes `k * 255 / peak` with
/// `k ~ Poisson(y * peak / 255)`.
pub fn add_poisson(img: &ImagePlane, spec: &NoiseSpec) -> Result<ImagePlane> {
    if spec.kind != NoiseKind::Poisson {
        return Err(Error::InvalidParameter("add_poisson needs a poisson noise spec".into()));
    }
    spec.validate()?;
    if let Some(v) = img.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "negative pixel {v} under poisson noise"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = spec.peak / 255.0;
    let mut out = Vec::with_capacity(img.data().len());
    for &v in img.data() {
        let rate = v * scale;
        let k = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(&mut rng)
        } else {
            0.0
        };
        out.push(snap_to_grid(k / scale));
    }
    ImagePlane::new(img.width(), img.height(), out)
}

pub fn add_noise(img: &ImagePlane, spec: &NoiseSpec) -> Result<ImagePlane> {
    match spec.kind {
        NoiseKind::Gaussian => add_awgn(img, spec),
        NoiseKind::Poisson => add_poisson(img, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_of_diff(a: &ImagePlane, b: &ImagePlane) -> f64 {
        let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = ImagePlane::from_fn(16, 16, |x, y| (x * y) as f64 + 0.123);
        assert_eq!(add_awgn(&img, &NoiseSpec::gaussian(0.0, 7)).unwrap(), img);
    }

    #[test]
    fn awgn_sample_std() {
        let img = ImagePlane::filled(512, 512, 128.0);
        let noisy = add_awgn(&img, &NoiseSpec::gaussian(25.0, 1)).unwrap();
        let s = std_of_diff(&noisy, &img);
        assert!((s - 25.0).abs() < 0.5, "std {s}");
    }

    #[test]
    fn deterministic() {
        let img = ImagePlane::filled(64, 64, 100.0);
        let spec = NoiseSpec::gaussian(30.0, 99);
        assert_eq!(add_awgn(&img, &spec).unwrap(), add_awgn(&img, &spec).unwrap());
        let p = NoiseSpec::poisson(10.0, 99);
        assert_eq!(add_poisson(&img, &p).unwrap(), add_poisson(&img, &p).unwrap());
        assert_ne!(
            add_awgn(&img, &spec).unwrap(),
            add_awgn(&img, &spec.with_seed(100)).unwrap()
        );
    }

    #[test]
    fn wrong_kind_rejected() {
        let img = ImagePlane::zeros(8, 8);
        assert!(add_awgn(&img, &NoiseSpec::poisson(10.0, 0)).is_err());
        assert!(add_poisson(&img, &NoiseSpec::gaussian(10.0, 0)).is_err());
        assert!(add_awgn(&img, &NoiseSpec::gaussian(101.0, 0)).is_err());
        assert!(add_poisson(&img, &NoiseSpec::poisson(0.0, 0)).is_err());
    }

    #[test]
    fn poisson_negative_pixel_rejected() {
        let mut img = ImagePlane::zeros(8, 8);
        img.set(1, 1, -0.5);
        assert!(add_poisson(&img, &NoiseSpec::poisson(10.0, 0)).is_err());
    }

    #[test]
    fn poisson_zero_image() {
        let img = ImagePlane::zeros(32, 32);
        let out = add_poisson(&img, &NoiseSpec::poisson(30.0, 3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_moments() {
        let img = ImagePlane::filled(512, 512, 255.0);
        let out = add_poisson(&img, &NoiseSpec::poisson(30.0, 5)).unwrap();
        let n = out.data().len() as f64;
        let mean = out.mean();
        let var = out.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 255.0).abs() < 3.0, "mean {mean}");
        let expected = 255.0 * 255.0 / 30.0;
        assert!((var / expected - 1.0).abs() < 0.05, "var {var} vs {expected}");
    }

    #[test]
    fn poisson_high_peak_approaches_identity() {
        let img = ImagePlane::from_fn(64, 64, |x, y| ((x * 7 + y * 3) % 256) as f64);
        let out = add_poisson(&img, &NoiseSpec::poisson(1e6, 11)).unwrap();
        let rms = (out
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / img.data().len() as f64)
            .sqrt();
        assert!(rms < 0.5, "rms {rms}");
    }

    #[test]
    fn parses_spec_strings() {
        assert_eq!(
            "gaussian:25".parse::<NoiseSpec>().unwrap(),
            NoiseSpec::gaussian(25.0, 0)
        );
        assert_eq!("poisson:30".parse::<NoiseSpec>().unwrap(), NoiseSpec::poisson(30.0, 0));
        assert_eq!("none".parse::<NoiseSpec>().unwrap().sigma, 0.0);
        assert!("laplace:3".parse::<NoiseSpec>().is_err());
        assert!("gaussian:abc".parse::<NoiseSpec>().is_err());
    }
}
