//! Shared inputs for the criterion benches.

use ccid_core::confidence::ground_truth_confidence;
use ccid_core::denoisers::{gaussian_filter, run_deep_denoiser};
use ccid_core::fixtures::fixture;
use ccid_core::image::add_awgn;
use ccid_core::{ConfidenceMap, ImagePlane, NoiseSpec};

pub const SIDE: usize = 512;

pub fn clean(side: usize) -> ImagePlane {
    fixture("terrain", side, side).expect("known fixture")
}

pub fn noisy(side: usize) -> ImagePlane {
    add_awgn(&clean(side), &NoiseSpec::gaussian(25.0, 7)).expect("valid noise")
}

/// Deep, reliable and oracle confidence for one noisy fixture.
pub fn branches(side: usize) -> (ImagePlane, ImagePlane, ConfidenceMap) {
    let noisy = noisy(side);
    let reliable = gaussian_filter(&noisy, 4.0).expect("valid sigma");
    let deep = run_deep_denoiser(&"mock:corrupt_half".parse().expect("valid spec"), &noisy)
        .expect("mock denoiser")
        .denoised;
    let conf = ground_truth_confidence(&clean(side), &deep).expect("same dims");
    (deep, reliable, conf)
}
