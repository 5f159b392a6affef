//! Deterministic synthetic grayscale scenes.
//!
//! Every scene is integer-valued in `[0, 255]`, so saving it as an 8-bit file
//! and loading it back gives the same plane.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::image::{save_image, ImagePlane};

/// Side length of the built-in set.
pub const FIXTURE_SIDE: usize = 128;

pub const FIXTURE_NAMES: [&str; 6] = ["bars", "blobs", "checker", "rings", "shapes", "terrain"];

fn quantize(v: f64) -> f64 {
    v.clamp(0.0, 255.0).round()
}

fn hash2(x: i64, y: i64, seed: u64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Bilinearly interpolated lattice noise in `[0, 1)`.
fn value_noise(x: f64, y: f64, cell: f64, seed: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - x0, gy - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let top = hash2(ix, iy, seed) * (1.0 - sx) + hash2(ix + 1, iy, seed) * sx;
    let bottom = hash2(ix, iy + 1, seed) * (1.0 - sx) + hash2(ix + 1, iy + 1, seed) * sx;
    top * (1.0 - sy) + bottom * sy
}

fn scene(name: &str, width: usize, height: usize) -> Option<ImagePlane> {
    let (w, h) = (width as f64, height as f64);
    let img = match name {
        "bars" => ImagePlane::from_fn(width, height, |x, y| {
            let band = (y * 4 / height) as f64;
            let freq = 0.08 + 0.12 * band;
            quantize(128.0 + 90.0 * (freq * x as f64).sin().signum() * (0.5 + band / 8.0))
        }),
        "blobs" => ImagePlane::from_fn(width, height, |x, y| {
            let centers = [
                (0.3, 0.3, 0.12, 160.0),
                (0.7, 0.4, 0.18, -90.0),
                (0.45, 0.75, 0.1, 120.0),
            ];
            let mut v = 90.0;
            for (cx, cy, r, amp) in centers {
                let dx = x as f64 / w - cx;
                let dy = y as f64 / h - cy;
                v += amp * (-(dx * dx + dy * dy) / (2.0 * r * r)).exp();
            }
            quantize(v)
        }),
        "checker" => ImagePlane::from_fn(width, height, |x, y| {
            let cell = ((x / 16) + (y / 16)) % 2;
            let ramp = 60.0 * x as f64 / w;
            quantize(if cell == 0 { 40.0 + ramp } else { 190.0 + ramp / 2.0 })
        }),
        "rings" => ImagePlane::from_fn(width, height, |x, y| {
            let dx = x as f64 - w / 2.0;
            let dy = y as f64 - h / 2.0;
            let r = (dx * dx + dy * dy).sqrt();
            quantize(128.0 + 100.0 * (r * r / (4.0 * w)).cos())
        }),
        "shapes" => ImagePlane::from_fn(width, height, |x, y| {
            let (u, v) = (x as f64 / w, y as f64 / h);
            let mut val = 70.0 + 40.0 * v;
            if (u - 0.3).powi(2) + (v - 0.35).powi(2) < 0.04 {
                val = 220.0;
            }
            if (0.55..0.9).contains(&u) && (0.15..0.45).contains(&v) {
                val = 30.0;
            }
            if v > 0.6 && (u - 0.6).abs() < (v - 0.6) * 0.9 {
                val = 170.0;
            }
            quantize(val)
        }),
        "terrain" => ImagePlane::from_fn(width, height, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            let v = 0.55 * value_noise(xf, yf, 32.0, 7)
                + 0.3 * value_noise(xf, yf, 11.0, 11)
                + 0.15 * value_noise(xf, yf, 4.0, 13);
            quantize(255.0 * v)
        }),
        _ => return None,
    };
    Some(img)
}

/// One named scene at the given size, or `None` for an unknown name.
pub fn fixture(name: &str, width: usize, height: usize) -> Option<ImagePlane> {
    scene(name, width, height)
}

/// The full set at `side x side`, in name order.
pub fn fixture_set(side: usize) -> Vec<(String, ImagePlane)> {
    FIXTURE_NAMES
        .iter()
        .map(|&n| (n.to_string(), scene(n, side, side).expect("known fixture")))
        .collect()
}

/// Writes the set as `<dir>/<name>.png` and returns the paths.
pub fn write_fixture_set(dir: impl AsRef<Path>, side: usize) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    fixture_set(side)
        .into_iter()
        .map(|(name, img)| {
            let path = dir.join(format!("{name}.png"));
            save_image(&img, &path)?;
            Ok(path)
        })
        .collect()
}
