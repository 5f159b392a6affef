//! Controllable, confidence-guided fusion of a reliable low-pass denoiser and
//! a deep denoiser output.
//!
//! The pipeline is:
//!
//! 1. denoise the noisy input twice: once with a Gaussian filter
//!    ([`denoisers::gaussian_filter`]) and once with an external deep
//!    denoiser ([`denoisers::run_deep_denoiser`]);
//! 2. optionally estimate a per-8x8-region confidence map for the deep
//!    output ([`confidence`]);
//! 3. fuse both outputs in the frequency domain under a user weight `w`
//!    ([`fusion`]), where `w = 0` yields the reliable image and `w = 1` the
//!    deep image.
//!
//! [`harness`] runs the batch evaluation protocols (weight sweeps,
//! out-of-distribution tables, confidence distributions) on top of that.

pub mod confidence;
pub mod denoisers;
mod error;
pub mod fixtures;
pub mod fusion;
pub mod harness;
pub mod image;
pub mod transforms;

pub use crate::confidence::{ConfidenceMap, ConfidenceModel};
pub use crate::denoisers::{DeepOutput, DenoiserSpec, MockMode};
pub use crate::error::{Error, Result};
pub use crate::fusion::{FusionMode, FusionParams, Schedule};
pub use crate::image::{ImagePlane, MetricReport, NoiseKind, NoiseSpec};
pub use crate::transforms::{DctSpectrum, Wavelet, WaveletPyramid};
