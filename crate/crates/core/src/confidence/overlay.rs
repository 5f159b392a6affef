use ::image::{ExtendedColorType, Rgb, RgbImage};

use super::ConfidenceMap;
use crate::error::{Error, Result};
use crate::image::encode_png_raw;
use crate::transforms::TILE;

pub const DEFAULT_OVERLAY_THRESHOLD: f64 = 0.95;

fn region_color(c: f64, threshold: f64) -> Rgb<u8> {
    let level = |k: f64| (255.0 * k.clamp(0.0, 1.0)).round() as u8;
    if c >= threshold {
        Rgb([0, level((c - threshold) / (1.0 - threshold)), 0])
    } else {
        let p = level((threshold - c) / threshold);
        Rgb([p, 0, p])
    }
}

/// Green above the threshold, purple below, intensity linear in the distance
/// to the threshold; each region is drawn as an 8x8 block.
pub fn render_overlay(conf: &ConfidenceMap, threshold: f64) -> Result<RgbImage> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "overlay threshold {threshold} outside (0, 1)"
        )));
    }
    let (gw, gh) = conf.dims();
    Ok(RgbImage::from_fn((gw * TILE) as u32, (gh * TILE) as u32, |x, y| {
        region_color(conf.get(x as usize / TILE, y as usize / TILE), threshold)
    }))
}

/// [`render_overlay`] cropped to `width x height` and encoded as PNG.
pub fn render_overlay_png(conf: &ConfidenceMap, threshold: f64, width: usize, height: usize) -> Result<Vec<u8>> {
    let full = render_overlay(conf, threshold)?;
    let (w, h) = (width.min(full.width() as usize), height.min(full.height() as usize));
    let cropped = ::image::imageops::crop_imm(&full, 0, 0, w as u32, h as u32).to_image();
    Ok(encode_png_raw(cropped.as_raw(), w, h, ExtendedColorType::Rgb8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors() {
        let map = ConfidenceMap::new(3, 1, vec![0.95, 1.0, 0.0]).unwrap();
        let img = render_overlay(&map, 0.95).unwrap();
        assert_eq!(img.dimensions(), (24, 8));
        assert_eq!(img.get_pixel(3, 3), &Rgb([0, 0, 0]));
        assert_eq!(img.get_pixel(12, 7), &Rgb([0, 255, 0]));
        assert_eq!(img.get_pixel(23, 0), &Rgb([255, 0, 255]));
    }

    #[test]
    fn halfway_intensities() {
        let map = ConfidenceMap::new(2, 1, vec![0.4, 0.9]).unwrap();
        let img = render_overlay(&map, 0.8).unwrap();
        assert_eq!(img.get_pixel(0, 0), &Rgb([128, 0, 128]));
        assert_eq!(img.get_pixel(8, 0), &Rgb([0, 128, 0]));
    }

    #[test]
    fn threshold_domain() {
        let map = ConfidenceMap::uniform(1, 1, 0.5).unwrap();
        assert!(render_overlay(&map, 0.0).is_err());
        assert!(render_overlay(&map, 1.0).is_err());
    }

    #[test]
    fn png_is_cropped() {
        let map = ConfidenceMap::uniform(2, 2, 0.5).unwrap();
        let png = render_overlay_png(&map, 0.95, 13, 9).unwrap();
        let img = ::image::load_from_memory(&png).unwrap();
        assert_eq!((img.width(), img.height()), (13, 9));
    }
}
