//! Separable multi-level 2-D DWT with periodized orthonormal filters.
//!
//! Odd-length signals are extended by repeating their last sample before
//! each analysis step; the synthesis step crops the extra sample back off,
//! so `idwt2(dwt2(x)) == x` for every size.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wavelet {
    #[default]
    Haar,
    Db2,
}

impl Wavelet {
    fn lowpass(self) -> &'static [f64] {
        const HAAR: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
        // (1 ± sqrt 3, 3 ± sqrt 3) / (4 sqrt 2)
        const DB2: [f64; 4] = [
            0.482_962_913_144_534_1,
            0.836_516_303_737_807_9,
            0.224_143_868_042_013_4,
            -0.129_409_522_551_260_4,
        ];
        match self {
            Wavelet::Haar => &HAAR,
            Wavelet::Db2 => &DB2,
        }
    }
}

impl FromStr for Wavelet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Wavelet::Haar),
            "db2" => Ok(Wavelet::Db2),
            _ => Err(Error::Parse(format!("unknown wavelet {s:?}"))),
        }
    }
}

impl std::fmt::Display for Wavelet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Wavelet::Haar => "haar",
            Wavelet::Db2 => "db2",
        })
    }
}

/// Quadrature-mirror filter pair for one wavelet.
struct Filters {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Filters {
    fn new(wavelet: Wavelet) -> Self {
        let lo = wavelet.lowpass().to_vec();
        let len = lo.len();
        let hi = (0..len)
            .map(|k| if k % 2 == 0 { lo[len - 1 - k] } else { -lo[len - 1 - k] })
            .collect();
        Self { lo, hi }
    }

    /// `x` has even length; writes `x.len() / 2` samples into each output.
    fn analyze(&self, x: &[f64], lo: &mut [f64], hi: &mut [f64]) {
        let n = x.len();
        for i in 0..n / 2 {
            let (mut a, mut d) = (0.0, 0.0);
            for (k, (hl, hh)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = x[(2 * i + k) % n];
                a += hl * v;
                d += hh * v;
            }
            lo[i] = a;
            hi[i] = d;
        }
    }

    /// Inverse of [`Filters::analyze`]; `out` has even length.
    fn synthesize(&self, lo: &[f64], hi: &[f64], out: &mut [f64]) {
        let n = out.len();
        out.fill(0.0);
        for i in 0..n / 2 {
            for (k, (hl, hh)) in self.lo.iter().zip(&self.hi).enumerate() {
                out[(2 * i + k) % n] += hl * lo[i] + hh * hi[i];
            }
        }
    }
}

/// Detail subbands of one decomposition level. `horizontal` is low-pass
/// across columns and high-pass down rows, `vertical` the transpose,
/// `diagonal` high-pass in both.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailBands {
    pub horizontal: ImagePlane,
    pub vertical: ImagePlane,
    pub diagonal: ImagePlane,
}

impl DetailBands {
    pub fn iter(&self) -> impl Iterator<Item = &ImagePlane> {
        [&self.horizontal, &self.vertical, &self.diagonal].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ImagePlane> {
        [&mut self.horizontal, &mut self.vertical, &mut self.diagonal].into_iter()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    pub wavelet: Wavelet,
    /// Coarsest low-pass band.
    pub approximation: ImagePlane,
    /// `details[0]` is level 1 (finest), `details[levels - 1]` the coarsest.
    pub details: Vec<DetailBands>,
    /// Input dimensions seen by each level, finest first.
    pub shapes: Vec<(usize, usize)>,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Output size of [`idwt2`].
    pub fn image_dims(&self) -> (usize, usize) {
        self.shapes[0]
    }

    pub fn energy(&self) -> f64 {
        let e = |p: &ImagePlane| p.data().iter().map(|v| v * v).sum::<f64>();
        e(&self.approximation) + self.details.iter().flat_map(|d| d.iter()).map(e).sum::<f64>()
    }

    fn check(&self) -> Result<()> {
        let levels = self.levels();
        if levels == 0 || self.shapes.len() != levels {
            return Err(Error::InvalidParameter(format!(
                "pyramid has {} detail levels and {} shapes",
                levels,
                self.shapes.len()
            )));
        }
        for (l, (bands, &(w, h))) in self.details.iter().zip(&self.shapes).enumerate() {
            let half = (w.div_ceil(2), h.div_ceil(2));
            for band in bands.iter() {
                if band.dims() != half {
                    return Err(Error::mismatch(half, band.dims()));
                }
            }
            let next = self.shapes.get(l + 1).copied();
            if let Some(next) = next {
                if next != half {
                    return Err(Error::mismatch(half, next));
                }
            } else if self.approximation.dims() != half {
                return Err(Error::mismatch(half, self.approximation.dims()));
            }
        }
        Ok(())
    }
}

fn extend_even(x: &[f64], buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend_from_slice(x);
    if x.len() % 2 == 1 {
        buf.push(x[x.len() - 1]);
    }
}

fn analyze_rows(f: &Filters, src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let hw = w.div_ceil(2);
    let mut lo = vec![0.0; hw * h];
    let mut hi = vec![0.0; hw * h];
    let mut buf = Vec::with_capacity(w + 1);
    for y in 0..h {
        extend_even(&src[y * w..(y + 1) * w], &mut buf);
        f.analyze(&buf, &mut lo[y * hw..(y + 1) * hw], &mut hi[y * hw..(y + 1) * hw]);
    }
    (lo, hi, hw)
}

fn analyze_cols(f: &Filters, src: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let hh = h.div_ceil(2);
    let mut lo = vec![0.0; w * hh];
    let mut hi = vec![0.0; w * hh];
    let mut col = Vec::with_capacity(h);
    let mut buf = Vec::with_capacity(h + 1);
    let (mut clo, mut chi) = (vec![0.0; hh], vec![0.0; hh]);
    for x in 0..w {
        col.clear();
        col.extend((0..h).map(|y| src[y * w + x]));
        extend_even(&col, &mut buf);
        f.analyze(&buf, &mut clo, &mut chi);
        for y in 0..hh {
            lo[y * w + x] = clo[y];
            hi[y * w + x] = chi[y];
        }
    }
    (lo, hi, hh)
}

fn synth_rows(f: &Filters, lo: &[f64], hi: &[f64], hw: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let mut buf = vec![0.0; 2 * hw];
    for y in 0..h {
        f.synthesize(&lo[y * hw..(y + 1) * hw], &hi[y * hw..(y + 1) * hw], &mut buf);
        out[y * w..(y + 1) * w].copy_from_slice(&buf[..w]);
    }
    out
}

fn synth_cols(f: &Filters, lo: &[f64], hi: &[f64], w: usize, hh: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let (mut clo, mut chi) = (vec![0.0; hh], vec![0.0; hh]);
    let mut buf = vec![0.0; 2 * hh];
    for x in 0..w {
        for y in 0..hh {
            clo[y] = lo[y * w + x];
            chi[y] = hi[y * w + x];
        }
        f.synthesize(&clo, &chi, &mut buf);
        for y in 0..h {
            out[y * w + x] = buf[y];
        }
    }
    out
}

fn plane(w: usize, h: usize, data: Vec<f64>) -> ImagePlane {
    ImagePlane::new(w, h, data).expect("band dimensions are consistent")
}

/// `levels`-deep decomposition. Requires `2^levels <= min(width, height)`.
pub fn dwt2(img: &ImagePlane, levels: usize, wavelet: Wavelet) -> Result<WaveletPyramid> {
    let min_side = img.width().min(img.height());
    if levels == 0 || levels >= usize::BITS as usize || (1usize << levels) > min_side {
        return Err(Error::InvalidParameter(format!(
            "{levels} DWT levels do not fit a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let f = Filters::new(wavelet);
    let mut details = Vec::with_capacity(levels);
    let mut shapes = Vec::with_capacity(levels);
    let (mut w, mut h) = img.dims();
    let mut current = img.data().to_vec();
    for _ in 0..levels {
        shapes.push((w, h));
        let (lo, hi, hw) = analyze_rows(&f, &current, w, h);
        let (ll, lh, hh) = analyze_cols(&f, &lo, hw, h);
        let (hl, hh_band, _) = analyze_cols(&f, &hi, hw, h);
        details.push(DetailBands {
            horizontal: plane(hw, hh, lh),
            vertical: plane(hw, hh, hl),
            diagonal: plane(hw, hh, hh_band),
        });
        current = ll;
        w = hw;
        h = hh;
    }
    Ok(WaveletPyramid {
        wavelet,
        approximation: plane(w, h, current),
        details,
        shapes,
    })
}

/// Inverse of [`dwt2`].
pub fn idwt2(pyr: &WaveletPyramid) -> Result<ImagePlane> {
    pyr.check()?;
    let f = Filters::new(pyr.wavelet);
    let mut current = pyr.approximation.data().to_vec();
    for (bands, &(w, h)) in pyr.details.iter().zip(&pyr.shapes).rev() {
        let (hw, hh) = (w.div_ceil(2), h.div_ceil(2));
        let lo = synth_cols(&f, &current, bands.horizontal.data(), hw, hh, h);
        let hi = synth_cols(&f, bands.vertical.data(), bands.diagonal.data(), hw, hh, h);
        current = synth_rows(&f, &lo, &hi, hw, h, w);
    }
    let (w, h) = pyr.image_dims();
    Ok(plane(w, h, current))
}
