//! The two denoising branches: a Gaussian low-pass filter that cannot
//! hallucinate, and an adapter around an arbitrary deep denoiser.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_image, reflect_index, save_image, snap_to_grid, ImagePlane};

/// Normalized 1-D Gaussian taps, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

fn convolve_separable(img: &ImagePlane, taps: &[f64]) -> ImagePlane {
    let (w, h) = img.dims();
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * row[reflect_index(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, t) in taps.iter().enumerate() {
            let src = reflect_index(y as isize + k as isize - r, h);
            let src_row = &tmp[src * w..(src + 1) * w];
            for (o, s) in out[y * w..(y + 1) * w].iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    }
    ImagePlane::new(w, h, out).expect("same dimensions as input")
}

/// Separable Gaussian blur with half-sample symmetric boundary extension.
///
/// The symmetric extension makes the filtered signal periodic and even, so
/// the global mean is preserved.
pub fn gaussian_filter(img: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
    let taps = gaussian_kernel(sigma)?;
    Ok(convolve_separable(img, &taps))
}

fn box3(img: &ImagePlane) -> ImagePlane {
    convolve_separable(img, &[1.0 / 3.0; 3])
}

/// Amplitude of the structured artifact injected by [`MockMode::CorruptHalf`].
pub const ARTIFACT_AMPLITUDE: f64 = 20.0;
/// Period in pixels of that artifact, along the anti-diagonal.
pub const ARTIFACT_PERIOD: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    Identity,
    Box3,
    /// Left half clean-looking, right half the noisy input plus a fixed
    /// sinusoidal artifact. The left half is the reference image when one is
    /// supplied, a 3x3 box blur of the input otherwise.
    CorruptHalf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserSpec {
    GaussianFilter {
        sigma: f64,
    },
    /// A precomputed output. A directory is resolved per image by file stem.
    ExternalFile {
        path: PathBuf,
    },
    /// Shell command with `{in}` and `{out}` placeholders; both are PGM files.
    ExternalCommand {
        template: String,
    },
    Mock {
        mode: MockMode,
    },
}

impl DenoiserSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserSpec::GaussianFilter { sigma } if !(*sigma > 0.0) => Err(Error::InvalidParameter(format!(
                "filter sigma must be positive, got {sigma}"
            ))),
            DenoiserSpec::ExternalCommand { template }
                if !(template.contains("{in}") && template.contains("{out}")) =>
            {
                Err(Error::InvalidParameter(
                    "command template needs {in} and {out} placeholders".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// `gaussian:<sigma>`, `file:<path>`, `cmd:<template>`, `mock:<mode>`.
impl FromStr for DenoiserSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("denoiser spec {s:?} lacks a kind prefix")))?;
        let spec = match kind {
            "gaussian" => DenoiserSpec::GaussianFilter {
                sigma: rest.parse().map_err(|_| Error::Parse(format!("bad sigma in {s:?}")))?,
            },
            "file" => DenoiserSpec::ExternalFile { path: rest.into() },
            "cmd" => DenoiserSpec::ExternalCommand {
                template: rest.to_string(),
            },
            "mock" => DenoiserSpec::Mock {
                mode: match rest {
                    "identity" => MockMode::Identity,
                    "box3" => MockMode::Box3,
                    "corrupt_half" | "corrupt-half" => MockMode::CorruptHalf,
                    _ => return Err(Error::Parse(format!("unknown mock mode {rest:?}"))),
                },
            },
            _ => return Err(Error::Parse(format!("unknown denoiser kind {kind:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DenoiserSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DenoiserSpec::GaussianFilter { sigma } => write!(f, "gaussian:{sigma}"),
            DenoiserSpec::ExternalFile { path } => write!(f, "file:{}", path.display()),
            DenoiserSpec::ExternalCommand { template } => write!(f, "cmd:{template}"),
            DenoiserSpec::Mock { mode } => {
                let name = match mode {
                    MockMode::Identity => "identity",
                    MockMode::Box3 => "box3",
                    MockMode::CorruptHalf => "corrupt_half",
                };
                write!(f, "mock:{name}")
            }
        }
    }
}

/// Extra per-image information some denoisers need.
#[derive(Clone, Copy, Debug, Default)]
pub struct DenoiseContext<'a> {
    /// File stem used to resolve per-image outputs in a directory.
    pub image_name: Option<&'a str>,
    /// Clean reference, used by [`MockMode::CorruptHalf`].
    pub reference: Option<&'a ImagePlane>,
}

/// Deep branch output. `noise_map + denoised == noisy` holds exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepOutput {
    pub denoised: ImagePlane,
    /// Residual `noisy - denoised`.
    pub noise_map: ImagePlane,
}

impl DeepOutput {
    /// Splits `noisy` into a snapped denoised image and its residual.
    ///
    /// Both operands sit on the 2^-20 sample grid, so the subtraction (and the
    /// reverse addition) is exact for any noisy input on that grid.
    pub fn from_denoised(noisy: &ImagePlane, denoised: &ImagePlane) -> Result<Self> {
        noisy.ensure_same_dims(denoised)?;
        let denoised = denoised.map(snap_to_grid);
        let noise_map = noisy.zip_map(&denoised, |n, d| n - d)?;
        Ok(Self { denoised, noise_map })
    }
}

fn external_err(message: impl Into<String>, stderr: impl Into<String>) -> Error {
    Error::External {
        message: message.into(),
        stderr: stderr.into(),
    }
}

fn resolve_file(path: &Path, name: Option<&str>) -> Result<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let name = name.ok_or_else(|| {
        external_err(
            format!("{} is a directory but no image name was given", path.display()),
            "",
        )
    })?;
    for ext in ["png", "pgm", "PNG", "PGM"] {
        let candidate = path.join(format!("{name}.{ext}"));
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(external_err(
        format!("no precomputed output for {name:?} in {}", path.display()),
        "",
    ))
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

fn run_command(template: &str, noisy: &ImagePlane) -> Result<ImagePlane> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let input = dir.path().join("in.pgm");
    let output = dir.path().join("out.pgm");
    save_image(noisy, &input)?;
    let cmd = template
        .replace("{in}", &shell_quote(&input))
        .replace("{out}", &shell_quote(&output));
    let result = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| external_err(format!("cannot spawn {cmd:?}: {e}"), ""))?;
    let stderr = String::from_utf8_lossy(&result.stderr).into_owned();
    if !result.status.success() {
        return Err(external_err(format!("{cmd:?} exited with {}", result.status), stderr));
    }
    load_image(&output).map_err(|e| external_err(format!("reading command output: {e}"), stderr))
}

fn corrupt_half(noisy: &ImagePlane, reference: Option<&ImagePlane>) -> Result<ImagePlane> {
    let smooth = match reference {
        Some(r) => {
            noisy.ensure_same_dims(r)?;
            r.clone()
        }
        None => box3(noisy),
    };
    let half = noisy.width() / 2;
    Ok(ImagePlane::from_fn(noisy.width(), noisy.height(), |x, y| {
        if x < half {
            smooth.get(x, y)
        } else {
            let phase = 2.0 * std::f64::consts::PI * (x + y) as f64 / ARTIFACT_PERIOD;
            noisy.get(x, y) + ARTIFACT_AMPLITUDE * phase.sin()
        }
    }))
}

/// Runs the deep branch and returns its output with the residual noise map.
pub fn run_deep_denoiser_with(spec: &DenoiserSpec, noisy: &ImagePlane, ctx: &DenoiseContext<'_>) -> Result<DeepOutput> {
    spec.validate()?;
    let denoised = match spec {
        DenoiserSpec::GaussianFilter { sigma } => gaussian_filter(noisy, *sigma)?,
        DenoiserSpec::ExternalFile { path } => {
            let file = resolve_file(path, ctx.image_name)?;
            load_image(&file).map_err(|e| external_err(e.to_string(), ""))?
        }
        DenoiserSpec::ExternalCommand { template } => run_command(template, noisy)?,
        DenoiserSpec::Mock { mode } => match mode {
            MockMode::Identity => noisy.clone(),
            MockMode::Box3 => box3(noisy),
            MockMode::CorruptHalf => corrupt_half(noisy, ctx.reference)?,
        },
    };
    if denoised.dims() != noisy.dims() {
        return Err(external_err(
            format!(
                "denoiser returned {}x{} for a {}x{} input",
                denoised.width(),
                denoised.height(),
                noisy.width(),
                noisy.height()
            ),
            "",
        ));
    }
    DeepOutput::from_denoised(noisy, &denoised)
}

pub fn run_deep_denoiser(spec: &DenoiserSpec, noisy: &ImagePlane) -> Result<DeepOutput> {
    run_deep_denoiser_with(spec, noisy, &DenoiseContext::default())
}
