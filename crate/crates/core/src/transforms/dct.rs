use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Row-major orthonormal DCT-II coefficients. Index `(u, v)` is the
/// horizontal / vertical frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct DctSpectrum {
    width: usize,
    height: usize,
    coeffs: Vec<f64>,
}

impl DctSpectrum {
    pub fn new(width: usize, height: usize, coeffs: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || coeffs.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "spectrum {width}x{height} with {} coefficients",
                coeffs.len()
            )));
        }
        Ok(Self { width, height, coeffs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.coeffs[v * self.width + u]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// Length-`n` orthonormal DCT-II / DCT-III via one complex FFT of the
/// even/odd reordered sequence.
struct Dct1d {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    // exp(-i pi k / 2n)
    twiddle: Vec<Complex<f64>>,
    scale_dc: f64,
    scale_ac: f64,
}

impl Dct1d {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let twiddle = (0..n)
            .map(|k| Complex::from_polar(1.0, -std::f64::consts::PI * k as f64 / (2 * n) as f64))
            .collect();
        Self {
            n,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            twiddle,
            scale_dc: (1.0 / n as f64).sqrt(),
            scale_ac: (2.0 / n as f64).sqrt(),
        }
    }

    fn cached(n: usize) -> Arc<Dct1d> {
        static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Dct1d>>>> = OnceLock::new();
        let plans = PLANS.get_or_init(Default::default);
        let mut guard = plans.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry(n).or_insert_with(|| Arc::new(Dct1d::new(n))).clone()
    }

    fn forward(&self, x: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n;
        for k in 0..n.div_ceil(2) {
            buf[k] = Complex::new(x[2 * k], 0.0);
        }
        for k in 0..n / 2 {
            buf[n - 1 - k] = Complex::new(x[2 * k + 1], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            let scale = if k == 0 { self.scale_dc } else { self.scale_ac };
            x[k] = (buf[k] * self.twiddle[k]).re * scale;
        }
    }

    fn inverse(&self, x: &mut [f64], buf: &mut [Complex<f64>]) {
        let n = self.n;
        let unscaled = |k: usize| -> f64 {
            if k == 0 {
                x[0] / self.scale_dc
            } else {
                x[k] / self.scale_ac
            }
        };
        for k in 0..n {
            let re = unscaled(k);
            let im = if k == 0 { 0.0 } else { -unscaled(n - k) };
            buf[k] = Complex::new(re, im) * self.twiddle[k].conj();
        }
        self.ifft.process(buf);
        let norm = 1.0 / n as f64;
        for k in 0..n.div_ceil(2) {
            x[2 * k] = buf[k].re * norm;
        }
        for k in 0..n / 2 {
            x[2 * k + 1] = buf[n - 1 - k].re * norm;
        }
    }
}

fn separable(data: &mut [f64], width: usize, height: usize, inverse: bool) {
    let rows = Dct1d::cached(width);
    let cols = Dct1d::cached(height);
    let mut buf = vec![Complex::new(0.0, 0.0); width.max(height)];
    for row in data.chunks_exact_mut(width) {
        if inverse {
            rows.inverse(row, &mut buf[..width]);
        } else {
            rows.forward(row, &mut buf[..width]);
        }
    }
    let mut column = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        if inverse {
            cols.inverse(&mut column, &mut buf[..height]);
        } else {
            cols.forward(&mut column, &mut buf[..height]);
        }
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
}

/// Orthonormal 2-D DCT-II, rows then columns.
pub fn dct2(img: &ImagePlane) -> DctSpectrum {
    let (width, height) = img.dims();
    let mut coeffs = img.data().to_vec();
    separable(&mut coeffs, width, height, false);
    DctSpectrum { width, height, coeffs }
}

/// Inverse of [`dct2`].
pub fn idct2(spec: &DctSpectrum) -> ImagePlane {
    let mut data = spec.coeffs.clone();
    separable(&mut data, spec.width, spec.height, true);
    ImagePlane::new(spec.width, spec.height, data).expect("spectrum dimensions are valid")
}
