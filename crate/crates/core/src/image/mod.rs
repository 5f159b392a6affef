//! Single-channel float rasters, file I/O, noise synthesis and quality metrics.

mod io;
mod metrics;
mod noise;

pub(crate) use io::encode_png_raw;
pub use io::{decode_image, encode_png, load_image, save_image, to_u8, write_metrics_csv};
pub use metrics::{evaluate, psnr, ssim, MetricReport};
pub use noise::{add_awgn, add_noise, add_poisson, snap_to_grid, NoiseKind, NoiseSpec, SAMPLE_GRID};

use crate::error::{Error, Result};

/// Minimum side length accepted at pipeline entry points.
pub const MIN_SIDE: usize = 8;

/// Row-major single-channel raster on the `[0, 255]` intensity scale.
///
/// Values are `f64` and may leave the nominal range while being processed;
/// conversion to 8 bits only happens at file boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("empty plane {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty plane");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two planes of equal size sample by sample.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &ImagePlane) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn ensure_same_dims(&self, other: &ImagePlane) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::mismatch(self.dims(), other.dims()));
        }
        Ok(())
    }

    pub fn ensure_min_size(&self, min: usize) -> Result<()> {
        if self.width < min || self.height < min {
            return Err(Error::TooSmall {
                width: self.width,
                height: self.height,
                min,
            });
        }
        Ok(())
    }

    /// The plane as it would be stored in an 8-bit file: clamped to `[0, 255]`
    /// and rounded half away from zero.
    pub fn quantized(&self) -> Self {
        self.map(|v| f64::from(to_u8(v)))
    }

    /// Extends the plane on the bottom and right edges by mirror reflection
    /// (edge sample repeated) so both sides become multiples of `multiple`.
    pub fn pad_to_multiple(&self, multiple: usize) -> Self {
        let w = self.width.div_ceil(multiple) * multiple;
        let h = self.height.div_ceil(multiple) * multiple;
        if (w, h) == self.dims() {
            return self.clone();
        }
        Self::from_fn(w, h, |x, y| {
            self.get(
                reflect_index(x as isize, self.width),
                reflect_index(y as isize, self.height),
            )
        })
    }

    /// Top-left `width x height` window.
    pub fn crop(&self, width: usize, height: usize) -> Self {
        assert!(width <= self.width && height <= self.height);
        if (width, height) == self.dims() {
            return self.clone();
        }
        Self::from_fn(width, height, |x, y| self.get(x, y))
    }
}

/// Maps an out-of-range index onto `0..len` by half-sample symmetric
/// reflection (`... c b a | a b c ... x y z | z y x ...`), periodic in `2 len`.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Block-averages the plane by a factor of 8 in both directions.
pub fn avg_pool8(img: &ImagePlane) -> Result<ImagePlane> {
    const B: usize = 8;
    if !img.width.is_multiple_of(B) || !img.height.is_multiple_of(B) {
        return Err(Error::InvalidParameter(format!(
            "avg_pool8 needs dimensions divisible by 8, got {}x{}",
            img.width, img.height
        )));
    }
    let (gw, gh) = (img.width / B, img.height / B);
    let mut out = Vec::with_capacity(gw * gh);
    for gy in 0..gh {
        for gx in 0..gw {
            let mut sum = 0.0;
            for y in gy * B..(gy + 1) * B {
                let row = &img.row(y)[gx * B..(gx + 1) * B];
                sum += row.iter().sum::<f64>();
            }
            out.push(sum / (B * B) as f64);
        }
    }
    ImagePlane::new(gw, gh, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_length() {
        assert!(ImagePlane::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImagePlane::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn pool_constant() {
        let img = ImagePlane::filled(32, 16, 42.5);
        let p = avg_pool8(&img).unwrap();
        assert_eq!(p.dims(), (4, 2));
        assert!(p.data().iter().all(|&v| v == 42.5));
    }

    #[test]
    fn pool_single_spike() {
        let mut img = ImagePlane::zeros(8, 8);
        img.set(3, 5, 64.0);
        let p = avg_pool8(&img).unwrap();
        assert_eq!(p.data(), &[1.0]);
    }

    #[test]
    fn pool_blockwise() {
        let img = ImagePlane::from_fn(16, 8, |x, _| if x < 8 { 8.0 } else { 16.0 });
        assert_eq!(avg_pool8(&img).unwrap().data(), &[8.0, 16.0]);
    }

    #[test]
    fn pool_rejects_ragged() {
        assert!(avg_pool8(&ImagePlane::zeros(12, 8)).is_err());
    }

    #[test]
    fn reflect_matches_symmetric_extension() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
    }

    #[test]
    fn pad_and_crop() {
        let img = ImagePlane::from_fn(10, 9, |x, y| (x + 10 * y) as f64);
        let p = img.pad_to_multiple(8);
        assert_eq!(p.dims(), (16, 16));
        assert_eq!(p.get(10, 0), img.get(9, 0));
        assert_eq!(p.get(11, 0), img.get(8, 0));
        assert_eq!(p.get(0, 9), img.get(0, 8));
        assert_eq!(p.crop(10, 9), img);
    }

    proptest! {
        #[test]
        fn pool_preserves_mean(vals in proptest::collection::vec(0.0f64..255.0, 16 * 24)) {
            let img = ImagePlane::new(16, 24, vals).unwrap();
            let p = avg_pool8(&img).unwrap();
            let rel = (p.mean() - img.mean()).abs() / img.mean().abs().max(1e-12);
            prop_assert!(rel < 1e-9);
        }
    }
}
