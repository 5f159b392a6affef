use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use ::image::codecs::png::PngEncoder;
use ::image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};

use super::{ImagePlane, MetricReport};
use crate::error::{Error, Result};

/// Clamps to `[0, 255]` and rounds half away from zero. NaN maps to 0.
#[inline]
pub fn to_u8(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, 255.0).round() as u8
}

fn rec601(r: u8, g: u8, b: u8) -> f64 {
    0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
}

fn decode(bytes: &[u8]) -> std::result::Result<ImagePlane, String> {
    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .decode()
        .map_err(|e| e.to_string())?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| rec601(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| rec601(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(format!(
                "unsupported bit depth or colour type {:?}; expected 8-bit samples",
                other.color()
            ))
        }
    };
    ImagePlane::new(w, h, data).map_err(|e| e.to_string())
}

/// Reads an 8-bit PNG or binary PGM. Colour inputs are reduced to Rec. 601
/// luma without rounding.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

/// [`load_image`] on an in-memory file.
pub fn decode_image(bytes: &[u8]) -> Result<ImagePlane> {
    decode(bytes).map_err(|reason| Error::Format {
        path: "<memory>".into(),
        reason,
    })
}

fn is_pgm(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("pgm") | Some("pnm")
    )
}

/// PNG bytes of the quantized plane.
pub fn encode_png(img: &ImagePlane) -> Vec<u8> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    encode_png_raw(&bytes, img.width(), img.height(), ExtendedColorType::L8)
}

pub(crate) fn encode_png_raw(bytes: &[u8], width: usize, height: usize, color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(bytes, width as u32, height as u32, color)
        .expect("in-memory PNG encoding cannot fail for valid dimensions");
    out
}

fn encode_pgm(img: &ImagePlane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| to_u8(v)));
    out
}

/// Writes the plane as 8-bit grayscale. `.pgm`/`.pnm` paths produce binary
/// PGM, anything else PNG.
pub fn save_image(img: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_pgm(path) { encode_pgm(img) } else { encode_png(img) };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Per-image metrics as CSV with header `image,psnr_db,ssim`.
pub fn write_metrics_csv<'a, W: Write>(out: W, rows: impl IntoIterator<Item = (&'a str, MetricReport)>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Parse(e.to_string());
    wtr.write_record(["image", "psnr_db", "ssim"]).map_err(csv_err)?;
    for (name, m) in rows {
        wtr.write_record([name.to_string(), m.psnr_db.to_string(), m.ssim.to_string()])
            .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
