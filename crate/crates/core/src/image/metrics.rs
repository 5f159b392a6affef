//! PSNR and SSIM on the 8-bit dynamic range.

use serde::{Deserialize, Serialize};

use super::ImagePlane;
use crate::error::Result;

const PEAK: f64 = 255.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// `+inf` for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
}

pub fn psnr(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let sse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let mse = sse / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable "valid" filtering: output shrinks by `SSIM_WINDOW - 1` per axis.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + j) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM over all 11x11 Gaussian-weighted windows (sigma 1.5, K1 = 0.01,
/// K2 = 0.03, dynamic range 255). Windows never cross the border.
pub fn ssim(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    a.ensure_same_dims(b)?;
    a.ensure_min_size(SSIM_WINDOW)?;
    let (w, h) = a.dims();
    let k = ssim_kernel();
    let x = a.data();
    let y = b.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(x, w, h, &k);
    let mu_y = filter_valid(y, w, h, &k);
    let e_xx = filter_valid(&xx, w, h, &k);
    let e_yy = filter_valid(&yy, w, h, &k);
    let e_xy = filter_valid(&xy, w, h, &k);

    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
        total += num / den;
    }
    Ok(total / mu_x.len() as f64)
}

pub fn evaluate(output: &ImagePlane, reference: &ImagePlane) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(output, reference)?,
        ssim: ssim(output, reference)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize) -> ImagePlane {
        ImagePlane::from_fn(w, h, |x, y| {
            128.0 + 60.0 * ((x as f64) * 0.3).sin() * ((y as f64) * 0.17).cos() + (x ^ y) as f64 % 13.0
        })
    }

    #[test]
    fn psnr_closed_forms() {
        let a = textured(32, 32);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 25.5);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 2.55);
        assert!((psnr(&a, &c).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_symmetric() {
        let a = textured(20, 16);
        let b = a.map(|v| v * 0.9 + 3.0);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let a = ImagePlane::zeros(16, 16);
        let b = ImagePlane::zeros(16, 17);
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn ssim_too_small() {
        let a = ImagePlane::zeros(10, 32);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ssim_self_is_one() {
        for img in [textured(11, 11), textured(64, 40), ImagePlane::filled(16, 16, 3.0)] {
            assert_eq!(ssim(&img, &img).unwrap(), 1.0);
        }
    }

    #[test]
    fn ssim_constant_pair_closed_form() {
        let a = ImagePlane::filled(32, 32, 100.0);
        let b = ImagePlane::filled(32, 32, 150.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        // Zero variance: contrast-structure term is c2/c2 = 1.
        let expected = (2.0 * 100.0 * 150.0 + c1) / (100.0f64.powi(2) + 150.0f64.powi(2) + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_independent_noise_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = ImagePlane::from_fn(256, 256, |_, _| rng.random_range(0.0..255.0));
        let b = ImagePlane::from_fn(256, 256, |_, _| rng.random_range(0.0..255.0));
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.05, "ssim {s}");
    }
}
