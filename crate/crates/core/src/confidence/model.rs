//! Ridge-regularized linear confidence surrogate.
//!
//! Features are standardized with the training mean and standard deviation,
//! the intercept is left unpenalized, and the weights solve
//! `(Z^T Z + lambda I) w = Z^T (y - mean(y))`. A rank-deficient design falls
//! back to the minimum-norm least-squares solution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{RegionFeatures, FEATURE_COUNT};
use super::ConfidenceMap;
use crate::error::{Error, Result};

pub const RIDGE_LAMBDA: f64 = 1e-3;
const MIN_REGIONS: usize = 100;
/// Eigenvalues of the standardized Gram matrix below this fraction of the
/// largest one count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub intercept: f64,
    /// One weight per standardized feature.
    pub weights: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub regions: usize,
    pub rank: usize,
    pub rank_deficient: bool,
    /// Root-mean-square training residual before clamping.
    pub rms_residual: f64,
}

impl ConfidenceModel {
    pub fn feature_count(&self) -> usize {
        self.weights.len()
    }

    /// Unclamped linear response.
    pub fn raw(&self, features: &[f64; FEATURE_COUNT]) -> f64 {
        let mut acc = self.intercept;
        for j in 0..FEATURE_COUNT {
            acc += self.weights[j] * (features[j] - self.feature_mean[j]) / self.feature_scale[j];
        }
        acc
    }

    /// Weight in raw feature units.
    pub fn raw_weight(&self, j: usize) -> f64 {
        self.weights[j] / self.feature_scale[j]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let k = model.weights.len();
        if model.feature_mean.len() != k || model.feature_scale.len() != k {
            return Err(Error::Parse("model vectors disagree in length".into()));
        }
        if model.feature_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Parse("model feature scales must be positive".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn fit_confidence_model(
    features: &[RegionFeatures],
    targets: &[ConfidenceMap],
) -> Result<(ConfidenceModel, FitReport)> {
    if features.len() != targets.len() {
        return Err(Error::InvalidParameter(format!(
            "{} feature grids for {} targets",
            features.len(),
            targets.len()
        )));
    }
    let mut rows: Vec<[f64; FEATURE_COUNT]> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for (f, t) in features.iter().zip(targets) {
        if (f.grid_width, f.grid_height) != t.dims() {
            return Err(Error::mismatch(t.dims(), (f.grid_width, f.grid_height)));
        }
        rows.extend_from_slice(&f.values);
        y.extend_from_slice(t.values());
    }
    let n = rows.len();
    if n < MIN_REGIONS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_REGIONS} training regions, got {n}"
        )));
    }

    let nf = n as f64;
    let mut mean = vec![0.0; FEATURE_COUNT];
    for r in &rows {
        for j in 0..FEATURE_COUNT {
            mean[j] += r[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut scale = vec![0.0; FEATURE_COUNT];
    for r in &rows {
        for j in 0..FEATURE_COUNT {
            scale[j] += (r[j] - mean[j]).powi(2);
        }
    }
    for s in &mut scale {
        *s = (*s / nf).sqrt();
        if *s < 1e-12 {
            // constant column: standardizes to all zeros
            *s = 1.0;
        }
    }
    let y_mean = y.iter().sum::<f64>() / nf;

    let z = DMatrix::from_fn(n, FEATURE_COUNT, |i, j| (rows[i][j] - mean[j]) / scale[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let gram = z.transpose() * &z;
    let rhs = z.transpose() * &yc;

    let eig = gram.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&e| e > RANK_TOL * max_eig.max(f64::MIN_POSITIVE))
        .count();
    let rank_deficient = rank < FEATURE_COUNT;

    let w = if rank_deficient {
        let pinv = gram
            .clone()
            .pseudo_inverse(RANK_TOL * max_eig.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pinv * &rhs
    } else {
        let mut reg = gram.clone();
        for j in 0..FEATURE_COUNT {
            reg[(j, j)] += RIDGE_LAMBDA;
        }
        reg.cholesky()
            .ok_or_else(|| Error::InvalidParameter("normal equations not positive definite".into()))?
            .solve(&rhs)
    };

    let residual = &z * &w - &yc;
    let model = ConfidenceModel {
        intercept: y_mean,
        weights: w.iter().copied().collect(),
        feature_mean: mean,
        feature_scale: scale,
        lambda: RIDGE_LAMBDA,
    };
    let report = FitReport {
        regions: n,
        rank,
        rank_deficient,
        rms_residual: (residual.norm_squared() / nf).sqrt(),
    };
    Ok((model, report))
}

/// Linear prediction per region, clamped to `[0, 1]`.
pub fn predict_confidence(model: &ConfidenceModel, features: &RegionFeatures) -> Result<ConfidenceMap> {
    if model.feature_count() != FEATURE_COUNT {
        return Err(Error::InvalidParameter(format!(
            "model expects {} features, extractor produces {FEATURE_COUNT}",
            model.feature_count()
        )));
    }
    let values = features
        .values
        .iter()
        .map(|f| {
            let v = model.raw(f);
            if v.is_nan() {
                0.0
            } else {
                v.clamp(0.0, 1.0)
            }
        })
        .collect();
    ConfidenceMap::new(features.grid_width, features.grid_height, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_grid(gw: usize, gh: usize, seed: u64) -> RegionFeatures {
        let mut s = seed | 1;
        let mut next = || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        RegionFeatures {
            grid_width: gw,
            grid_height: gh,
            values: (0..gw * gh)
                .map(|_| [next() * 30.0, next() * 5.0, next() * 10.0, next() * 400.0, next()])
                .collect(),
        }
    }

    fn linear_target(f: &RegionFeatures, coef: [f64; 5], b: f64) -> ConfidenceMap {
        let v = f
            .values
            .iter()
            .map(|r| b + r.iter().zip(coef).map(|(x, c)| x * c).sum::<f64>())
            .collect();
        ConfidenceMap::new(f.grid_width, f.grid_height, v).unwrap()
    }

    const COEF: [f64; 5] = [-0.004, -0.01, -0.005, -0.0002, 0.1];

    #[test]
    fn recovers_exact_linear_targets() {
        // Ridge shrinkage leaves a residual of about lambda / n times the
        // target spread, so the grid has to be large for a 1e-8 bound.
        let f = synthetic_grid(128, 128, 3);
        let t = linear_target(&f, COEF, 0.55);
        let (model, report) = fit_confidence_model(std::slice::from_ref(&f), &[t]).unwrap();
        assert!(!report.rank_deficient);
        assert!(report.rms_residual < 1e-8, "residual {}", report.rms_residual);
        for (j, c) in COEF.iter().enumerate() {
            assert!((model.raw_weight(j) - c).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_targets() {
        let f = synthetic_grid(16, 16, 5);
        let t = ConfidenceMap::uniform(16, 16, 0.7).unwrap();
        let (model, _) = fit_confidence_model(&[f], &[t]).unwrap();
        assert!((model.intercept - 0.7).abs() < 1e-12);
        assert!(model.weights.iter().all(|w| w.abs() < 1e-6));
    }

    #[test]
    fn order_independent() {
        let f = synthetic_grid(16, 16, 9);
        let t = linear_target(&f, COEF, 0.6);
        let (m1, _) = fit_confidence_model(std::slice::from_ref(&f), std::slice::from_ref(&t)).unwrap();
        let mut perm: Vec<usize> = (0..256).collect();
        perm.reverse();
        perm.swap(3, 100);
        let fp = RegionFeatures {
            values: perm.iter().map(|&i| f.values[i]).collect(),
            ..f
        };
        let tp = ConfidenceMap::new(16, 16, perm.iter().map(|&i| t.values()[i]).collect()).unwrap();
        let (m2, _) = fit_confidence_model(&[fp], &[tp]).unwrap();
        assert!((m1.intercept - m2.intercept).abs() < 1e-9);
        for (a, b) in m1.weights.iter().zip(&m2.weights) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_falls_back() {
        let mut f = synthetic_grid(16, 16, 11);
        for r in &mut f.values {
            r[4] = 0.5;
            r[3] = 2.0 * r[0];
        }
        let t = linear_target(&f, [-0.01, -0.01, 0.0, 0.0, 0.0], 0.9);
        let (model, report) = fit_confidence_model(&[f.clone()], &[t]).unwrap();
        assert!(report.rank_deficient);
        assert_eq!(report.rank, 3);
        assert!(report.rms_residual < 1e-9);
        assert!(model.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn too_few_regions() {
        let f = synthetic_grid(8, 8, 1);
        let t = ConfidenceMap::uniform(8, 8, 0.5).unwrap();
        assert!(fit_confidence_model(&[f], &[t]).is_err());
    }

    #[test]
    fn zero_features_give_clamped_intercept() {
        let model = ConfidenceModel {
            intercept: 1.3,
            weights: vec![0.5; 5],
            feature_mean: vec![0.0; 5],
            feature_scale: vec![1.0; 5],
            lambda: RIDGE_LAMBDA,
        };
        let f = RegionFeatures {
            grid_width: 2,
            grid_height: 1,
            values: vec![[0.0; 5]; 2],
        };
        assert_eq!(predict_confidence(&model, &f).unwrap().values(), &[1.0, 1.0]);
        let low = ConfidenceModel {
            intercept: 0.25,
            ..model
        };
        assert_eq!(predict_confidence(&low, &f).unwrap().values(), &[0.25, 0.25]);
    }

    #[test]
    fn feature_count_mismatch() {
        let model = ConfidenceModel {
            intercept: 0.5,
            weights: vec![0.0; 4],
            feature_mean: vec![0.0; 4],
            feature_scale: vec![1.0; 4],
            lambda: RIDGE_LAMBDA,
        };
        let f = synthetic_grid(2, 2, 1);
        assert!(predict_confidence(&model, &f).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let f = synthetic_grid(16, 16, 21);
        let t = linear_target(&f, COEF, 0.5);
        let (model, _) = fit_confidence_model(std::slice::from_ref(&f), &[t]).unwrap();
        let back = ConfidenceModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            predict_confidence(&back, &f).unwrap(),
            predict_confidence(&model, &f).unwrap()
        );
        assert!(ConfidenceModel::from_json("{}").is_err());
    }
}
