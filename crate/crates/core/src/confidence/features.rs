//! Hand-crafted per-region features built from the same three inputs a
//! learned confidence predictor would see: the noisy image, the reliable
//! (filtered) image and the deep residual noise map.

use crate::error::Result;
use crate::image::ImagePlane;
use crate::transforms::{dwt2, Wavelet, TILE};

pub const FEATURE_COUNT: usize = 5;

/// One feature vector per 8x8 region, row-major.
///
/// Features, in order:
/// 0. std of `noisy - filtered`
/// 1. `|mean|` of the noise map
/// 2. distance of the noise-map std from the median over all regions
/// 3. Haar level-1 detail energy per pixel of the deep output
/// 4. mean filtered intensity / 255
#[derive(Clone, Debug, PartialEq)]
pub struct RegionFeatures {
    pub grid_width: usize,
    pub grid_height: usize,
    pub values: Vec<[f64; FEATURE_COUNT]>,
}

fn region(img: &ImagePlane, gx: usize, gy: usize) -> ImagePlane {
    ImagePlane::from_fn(TILE, TILE, |x, y| img.get(gx * TILE + x, gy * TILE + y))
}

fn mean_std(p: &ImagePlane) -> (f64, f64) {
    let m = p.mean();
    let var = p.data().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / p.data().len() as f64;
    (m, var.sqrt())
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn region_features(noisy: &ImagePlane, filtered: &ImagePlane, noise_map: &ImagePlane) -> Result<RegionFeatures> {
    noisy.ensure_same_dims(filtered)?;
    noisy.ensure_same_dims(noise_map)?;
    let noisy = noisy.pad_to_multiple(TILE);
    let filtered = filtered.pad_to_multiple(TILE);
    let noise_map = noise_map.pad_to_multiple(TILE);
    let texture = noisy.zip_map(&filtered, |a, b| a - b)?;
    let denoised = noisy.zip_map(&noise_map, |a, b| a - b)?;
    let (gw, gh) = (noisy.width() / TILE, noisy.height() / TILE);

    let mut values = Vec::with_capacity(gw * gh);
    let mut noise_stds = Vec::with_capacity(gw * gh);
    for gy in 0..gh {
        for gx in 0..gw {
            let (_, tex_std) = mean_std(&region(&texture, gx, gy));
            let (nm_mean, nm_std) = mean_std(&region(&noise_map, gx, gy));
            let pyr = dwt2(&region(&denoised, gx, gy), 1, Wavelet::Haar)?;
            let detail: f64 = pyr.details[0].iter().flat_map(|b| b.data().iter()).map(|c| c * c).sum();
            let (f_mean, _) = mean_std(&region(&filtered, gx, gy));
            noise_stds.push(nm_std);
            values.push([
                tex_std,
                nm_mean.abs(),
                nm_std,
                detail / (TILE * TILE) as f64,
                f_mean / 255.0,
            ]);
        }
    }
    let med = median(&noise_stds);
    for f in &mut values {
        f[2] = (f[2] - med).abs();
    }
    Ok(RegionFeatures {
        grid_width: gw,
        grid_height: gh,
        values,
    })
}
