use std::sync::OnceLock;

use serde::Serialize;

use super::{mean, prepare_cases, ConfidenceSource, ExperimentSpec, NamedImage};
use crate::confidence::{
    fit_confidence_model, ground_truth_confidence, predict_confidence, region_features, ConfidenceMap, ConfidenceModel,
    FitReport, RegionFeatures,
};
use crate::error::{Error, Result};
use crate::fixtures::fixture_set;
use crate::image::NoiseSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainingReport {
    pub fit: FitReport,
    /// Mean absolute error against the oracle on the training regions.
    pub mae: f64,
    pub images: usize,
}

/// Features and oracle targets for every image under every spec.
pub fn training_data(
    specs: &[ExperimentSpec],
    images: &[NamedImage],
) -> Result<(Vec<RegionFeatures>, Vec<ConfidenceMap>)> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for spec in specs {
        let mut s = spec.clone();
        s.conf = ConfidenceSource::None;
        let (cases, _) = prepare_cases(&s, images)?;
        for c in &cases {
            features.push(region_features(&c.noisy, &c.reliable, &c.noise_map)?);
            targets.push(ground_truth_confidence(&c.clean, &c.deep)?);
        }
    }
    Ok((features, targets))
}

/// Mean absolute difference between predicted and oracle confidence.
pub fn confidence_mae(model: &ConfidenceModel, features: &[RegionFeatures], targets: &[ConfidenceMap]) -> Result<f64> {
    let mut errors = Vec::new();
    for (f, t) in features.iter().zip(targets) {
        let p = predict_confidence(model, f)?;
        errors.extend(p.values().iter().zip(t.values()).map(|(a, b)| (a - b).abs()));
    }
    Ok(mean(errors))
}

/// Fits the surrogate on oracle confidence of the deep branch, pooled over
/// every `(spec, image)` pair in order.
pub fn train_confidence_model(
    specs: &[ExperimentSpec],
    images: &[NamedImage],
) -> Result<(ConfidenceModel, TrainingReport)> {
    let (features, targets) = training_data(specs, images)?;
    let (model, fit) = fit_confidence_model(&features, &targets)?;
    let mae = confidence_mae(&model, &features, &targets)?;
    Ok((
        model,
        TrainingReport {
            fit,
            mae,
            images: targets.len(),
        },
    ))
}

/// Training setup of the built-in model: the synthetic fixtures under
/// Gaussian noise, deep branch played by the corrupt-half and box mocks.
pub fn default_training_specs() -> Vec<ExperimentSpec> {
    let mut specs = Vec::new();
    for (k, sigma) in [10.0, 25.0, 50.0].into_iter().enumerate() {
        for deep in ["mock:corrupt_half", "mock:box3"] {
            let mut s = ExperimentSpec::new("fixtures");
            s.noise = NoiseSpec::gaussian(sigma, 1000 * k as u64);
            s.deep = deep.parse().expect("valid mock");
            specs.push(s);
        }
    }
    specs
}

/// The surrogate used when no model file is given, trained once per process.
pub fn default_confidence_model() -> Result<&'static ConfidenceModel> {
    static MODEL: OnceLock<std::result::Result<ConfidenceModel, String>> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let images: Vec<NamedImage> = fixture_set(128)
                .into_iter()
                .map(|(n, i)| NamedImage::new(n, i))
                .collect();
            train_confidence_model(&default_training_specs(), &images)
                .map(|(m, _)| m)
                .map_err(|e| e.to_string())
        })
        .as_ref()
        .map_err(|e| Error::Unavailable(format!("default confidence model: {e}")))
}
