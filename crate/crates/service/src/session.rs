use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use ccid_core::confidence::{ground_truth_confidence, predict_confidence, region_features};
use ccid_core::denoisers::{run_deep_denoiser_with, DenoiseContext};
use ccid_core::fusion::Fuser;
use ccid_core::harness::run_reliable;
use ccid_core::image::{encode_png, evaluate};
use ccid_core::{
    ConfidenceMap, ConfidenceModel, DeepOutput, DenoiserSpec, Error, FusionMode, FusionParams, ImagePlane,
    MetricReport, Result, Schedule, Wavelet,
};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// Where a session's confidence map came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfTag {
    Model,
    Oracle,
    External,
}

impl ConfTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfTag::Model => "model",
            ConfTag::Oracle => "oracle",
            ConfTag::External => "external",
        }
    }
}

impl fmt::Display for ConfTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(ConfTag::Model),
            "oracle" => Ok(ConfTag::Oracle),
            "external" | "file" => Ok(ConfTag::External),
            _ => Err(Error::Parse(format!("unknown confidence source {s:?}"))),
        }
    }
}

/// Optional JSON `config` part of a session upload.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Reliable denoiser, e.g. `gaussian:4`.
    pub reliable: Option<String>,
    /// Deep denoiser spec used when no deep output is uploaded.
    pub deep: Option<String>,
    /// Default confidence source for `conf=default` requests.
    pub confidence: Option<String>,
    pub a: Option<f64>,
    pub eps: Option<f64>,
    pub t: Option<f64>,
    pub wavelet: Option<String>,
    pub clamp_deep: bool,
}

pub struct SessionInput {
    pub noisy: ImagePlane,
    pub ground_truth: Option<ImagePlane>,
    pub deep: Option<ImagePlane>,
    pub confidence: Option<ConfidenceMap>,
    pub config: SessionConfig,
}

/// Cache key of one rendered fusion result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FuseKey {
    pub mode: FusionMode,
    w_bits: u64,
    pub schedule: Schedule,
    pub conf: Option<ConfTag>,
}

impl FuseKey {
    /// Confidence only affects the patch-wise mode, so other modes share
    /// one entry regardless of it.
    pub fn new(mode: FusionMode, w: f64, schedule: Schedule, conf: Option<ConfTag>) -> Self {
        Self {
            mode,
            w_bits: w.to_bits(),
            schedule,
            conf: if mode == FusionMode::DwtConf { conf } else { None },
        }
    }

    pub fn w(&self) -> f64 {
        f64::from_bits(self.w_bits)
    }
}

#[derive(Debug)]
pub struct Rendered {
    pub png: Vec<u8>,
    /// Metrics of the 8-bit output against the ground truth, when present.
    pub metrics: Option<MetricReport>,
}

pub struct Session {
    pub id: String,
    pub noisy: ImagePlane,
    pub ground_truth: Option<ImagePlane>,
    pub noise_map: ImagePlane,
    pub fuser: Fuser,
    pub params: FusionParams,
    pub confidences: IndexMap<ConfTag, ConfidenceMap>,
    pub default_conf: Option<ConfTag>,
    pub reliable_spec: DenoiserSpec,
    pub deep_source: String,
    cache: Mutex<HashMap<FuseKey, Arc<Rendered>>>,
}

#[derive(Debug, Serialize)]
pub struct SessionInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub has_ground_truth: bool,
    pub confidence_sources: Vec<ConfTag>,
    pub confidence_source: Option<ConfTag>,
    pub reliable: String,
    pub deep: String,
    pub a: f64,
    pub eps: f64,
    pub t: f64,
    pub wavelet: Wavelet,
}

impl Session {
    /// Runs both denoising branches and every available confidence source.
    pub fn build(
        id: String,
        input: SessionInput,
        default_deep: &DenoiserSpec,
        model: &ConfidenceModel,
    ) -> Result<Self> {
        let SessionInput {
            noisy,
            ground_truth,
            deep,
            confidence,
            config,
        } = input;
        noisy.ensure_min_size(ccid_core::image::MIN_SIDE)?;
        if let Some(gt) = &ground_truth {
            noisy.ensure_same_dims(gt)?;
        }
        let reliable_spec: DenoiserSpec = match &config.reliable {
            Some(s) => s.parse()?,
            None => DenoiserSpec::GaussianFilter { sigma: 4.0 },
        };
        let ctx = DenoiseContext {
            image_name: None,
            reference: ground_truth.as_ref(),
        };
        let reliable = run_reliable(&reliable_spec, &noisy, &ctx)?;
        let (mut deep_out, deep_source) = match deep {
            Some(d) => (DeepOutput::from_denoised(&noisy, &d)?, "upload".to_string()),
            None => {
                let spec: DenoiserSpec = match &config.deep {
                    Some(s) => s.parse()?,
                    None => default_deep.clone(),
                };
                (run_deep_denoiser_with(&spec, &noisy, &ctx)?, spec.to_string())
            }
        };
        if config.clamp_deep {
            deep_out = DeepOutput::from_denoised(&noisy, &deep_out.denoised.map(|v| v.clamp(0.0, 255.0)))?;
        }

        let mut confidences = IndexMap::new();
        let features = region_features(&noisy, &reliable, &deep_out.noise_map)?;
        confidences.insert(ConfTag::Model, predict_confidence(model, &features)?);
        if let Some(gt) = &ground_truth {
            confidences.insert(ConfTag::Oracle, ground_truth_confidence(gt, &deep_out.denoised)?);
        }
        if let Some(map) = confidence {
            let expected = ConfidenceMap::grid_for(noisy.width(), noisy.height());
            if map.dims() != expected {
                return Err(Error::mismatch(expected, map.dims()));
            }
            confidences.insert(ConfTag::External, map);
        }
        let default_conf = match config.confidence.as_deref() {
            None => Some(if ground_truth.is_some() {
                ConfTag::Oracle
            } else {
                ConfTag::Model
            }),
            Some("none") => None,
            Some(s) => {
                let tag: ConfTag = s.parse()?;
                if !confidences.contains_key(&tag) {
                    return Err(Error::Unavailable(format!("confidence source {tag} is not available")));
                }
                Some(tag)
            }
        };

        let defaults = FusionParams::default();
        let params = FusionParams {
            a: config.a.unwrap_or(defaults.a),
            eps: config.eps.unwrap_or(defaults.eps),
            t: config.t.unwrap_or(defaults.t),
            wavelet: match &config.wavelet {
                Some(w) => w.parse()?,
                None => defaults.wavelet,
            },
            ..defaults
        };
        params.validate()?;

        Ok(Self {
            id,
            fuser: Fuser::new(deep_out.denoised, reliable)?,
            noisy,
            ground_truth,
            noise_map: deep_out.noise_map,
            params,
            confidences,
            default_conf,
            reliable_spec,
            deep_source,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.noisy.dims()
    }

    pub fn info(&self) -> SessionInfo {
        let (width, height) = self.dims();
        SessionInfo {
            id: self.id.clone(),
            width,
            height,
            has_ground_truth: self.ground_truth.is_some(),
            confidence_sources: self.confidences.keys().copied().collect(),
            confidence_source: self.default_conf,
            reliable: self.reliable_spec.to_string(),
            deep: self.deep_source.clone(),
            a: self.params.a,
            eps: self.params.eps,
            t: self.params.t,
            wavelet: self.params.wavelet,
        }
    }

    pub fn confidence(&self, tag: ConfTag) -> Result<&ConfidenceMap> {
        self.confidences
            .get(&tag)
            .ok_or_else(|| Error::Unavailable(format!("confidence source {tag} is not available for this session")))
    }

    /// Fused float image for `key`; not cached.
    pub fn fuse(&self, key: &FuseKey) -> Result<ImagePlane> {
        let conf = match key.conf {
            Some(tag) => Some(self.confidence(tag)?),
            None => None,
        };
        let params = FusionParams {
            w: key.w(),
            mode: key.mode,
            schedule: key.schedule,
            ..self.params
        };
        self.fuser.fuse(conf, &params)
    }

    fn metrics_of(&self, fused: &ImagePlane) -> Option<MetricReport> {
        let gt = self.ground_truth.as_ref()?;
        evaluate(&fused.quantized(), gt).ok()
    }

    /// Cached PNG and metrics for `key`. Concurrent misses may compute the
    /// same entry twice; the first stored result wins and both are identical.
    pub fn render(&self, key: FuseKey) -> Result<Arc<Rendered>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let fused = self.fuse(&key)?;
        let rendered = Arc::new(Rendered {
            png: encode_png(&fused),
            metrics: self.metrics_of(&fused),
        });
        let mut cache = self.cache.lock().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(rendered)))
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }
}

/// Sessions in least-recently-used order; the oldest is evicted at capacity.
pub struct SessionStore {
    capacity: usize,
    sessions: IndexMap<String, Arc<Session>>,
}

impl SessionStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            sessions: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Looks a session up and marks it most recently used.
    pub fn get(&mut self, id: &str) -> Option<Arc<Session>> {
        let idx = self.sessions.get_index_of(id)?;
        let last = self.sessions.len() - 1;
        self.sessions.move_index(idx, last);
        self.sessions.get_index(last).map(|(_, s)| Arc::clone(s))
    }

    /// Inserts a session, returning the id of an evicted one.
    pub fn insert(&mut self, session: Arc<Session>) -> Option<String> {
        let mut evicted = None;
        if !self.sessions.contains_key(&session.id) && self.sessions.len() >= self.capacity {
            evicted = self.sessions.shift_remove_index(0).map(|(id, _)| id);
        }
        self.sessions.insert(session.id.clone(), session);
        evicted
    }

    pub fn remove(&mut self, id: &str) -> bool {
        self.sessions.shift_remove(id).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccid_core::fixtures::fixture;
    use ccid_core::harness::default_confidence_model;

    fn input() -> SessionInput {
        SessionInput {
            noisy: fixture("rings", 32, 24).unwrap(),
            ground_truth: None,
            deep: None,
            confidence: None,
            config: SessionConfig::default(),
        }
    }

    fn session(id: &str) -> Arc<Session> {
        let model = default_confidence_model().unwrap();
        Arc::new(Session::build(id.into(), input(), &"mock:box3".parse().unwrap(), model).unwrap())
    }

    #[test]
    fn lru_evicts_oldest_untouched() {
        let mut store = SessionStore::new(2);
        store.insert(session("a"));
        store.insert(session("b"));
        assert!(store.get("a").is_some());
        assert_eq!(store.insert(session("c")), Some("b".into()));
        assert!(store.get("b").is_none());
        assert!(store.get("a").is_some() && store.get("c").is_some());
        assert!(store.remove("a"));
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn key_ignores_confidence_outside_patch_mode() {
        let a = FuseKey::new(FusionMode::Dct, 0.5, Schedule::LowFirst, Some(ConfTag::Model));
        let b = FuseKey::new(FusionMode::Dct, 0.5, Schedule::LowFirst, None);
        assert_eq!(a, b);
        let c = FuseKey::new(FusionMode::DwtConf, 0.5, Schedule::LowFirst, Some(ConfTag::Model));
        assert_ne!(c.conf, None);
    }

    #[test]
    fn render_is_cached_and_stable() {
        let s = session("x");
        let key = FuseKey::new(FusionMode::DwtConf, 0.4, Schedule::LowFirst, Some(ConfTag::Model));
        let first = s.render(key).unwrap();
        let second = s.render(key).unwrap();
        assert!(Arc::ptr_eq(&first, &second));
        assert_eq!(s.cached_entries(), 1);
        assert!(first.metrics.is_none());
    }

    #[test]
    fn unavailable_default_source() {
        let mut inp = input();
        inp.config.confidence = Some("oracle".into());
        let model = default_confidence_model().unwrap();
        let r = Session::build("y".into(), inp, &"mock:box3".parse().unwrap(), model);
        assert!(matches!(r, Err(Error::Unavailable(_))));
    }
}
