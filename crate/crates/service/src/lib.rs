//! Session-oriented HTTP API over the fusion pipeline.
//!
//! A session holds one noisy upload together with its reliable and deep
//! branches and every available confidence map; fused images are rendered on
//! demand and cached per parameter tuple.

mod error;
mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::header::{HeaderName, CONTENT_TYPE};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use ccid_core::confidence::{render_overlay_png, ConfidenceMap, DEFAULT_OVERLAY_THRESHOLD};
use ccid_core::harness::default_confidence_model;
use ccid_core::image::{decode_image, encode_png};
use ccid_core::{ConfidenceModel, DenoiserSpec, FusionMode, ImagePlane, MetricReport, MockMode, Schedule};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

pub use error::{ApiError, ApiResult};
pub use session::{ConfTag, FuseKey, Rendered, Session, SessionConfig, SessionInfo, SessionInput, SessionStore};

pub const DEFAULT_PORT: u16 = 8787;
pub const DEFAULT_MAX_SESSIONS: usize = 16;
/// Upper bound on a whole multipart upload.
pub const MAX_UPLOAD_BYTES: usize = 64 << 20;

pub const PSNR_HEADER: &str = "x-psnr";
pub const SSIM_HEADER: &str = "x-ssim";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    /// Directory served under `/app`.
    pub static_dir: Option<PathBuf>,
    /// Deep denoiser used when a session neither uploads an output nor names one.
    pub default_deep: DenoiserSpec,
    /// Surrogate for the `model` confidence source; the built-in one if unset.
    pub model: Option<ConfidenceModel>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_sessions: DEFAULT_MAX_SESSIONS,
            static_dir: None,
            default_deep: DenoiserSpec::Mock { mode: MockMode::Box3 },
            model: None,
        }
    }
}

/// Port from `CCID_PORT`, falling back to [`DEFAULT_PORT`].
pub fn port_from_env() -> Result<u16, String> {
    match std::env::var("CCID_PORT") {
        Ok(v) => v.parse().map_err(|_| format!("CCID_PORT={v:?} is not a port number")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

struct Inner {
    store: Mutex<SessionStore>,
    config: ServiceConfig,
    model: Arc<ConfidenceModel>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> ccid_core::Result<Self> {
        let model = match &config.model {
            Some(m) => m.clone(),
            None => default_confidence_model()?.clone(),
        };
        Ok(Self {
            inner: Arc::new(Inner {
                store: Mutex::new(SessionStore::new(config.max_sessions)),
                config,
                model: Arc::new(model),
            }),
        })
    }

    pub fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.inner
            .store
            .lock()
            .expect("session store lock")
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("no session {id:?}")))
    }

    pub fn session_count(&self) -> usize {
        self.inner.store.lock().expect("session store lock").len()
    }
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([
            HeaderName::from_static(PSNR_HEADER),
            HeaderName::from_static(SSIM_HEADER),
        ]);
    let mut app = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", axum::routing::post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/fused", get(fused))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/confidence", get(confidence))
        .route("/sessions/{id}/noisy", get(noisy))
        .route("/sessions/{id}/reliable", get(reliable))
        .route("/sessions/{id}/deep", get(deep))
        .route("/sessions/{id}/ground_truth", get(ground_truth));
    if let Some(dir) = &state.inner.config.static_dir {
        app = app.nest_service("/app", ServeDir::new(dir));
    }
    app.layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .layer(cors)
        .with_state(state)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn decode_part(name: &str, bytes: &[u8]) -> ApiResult<ImagePlane> {
    decode_image(bytes).map_err(|e| ApiError::bad_request(format!("{name}: {e}")))
}

async fn create_session(
    State(state): State<AppState>,
    mut multipart: Multipart,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let mut noisy = None;
    let mut ground_truth = None;
    let mut deep = None;
    let mut conf = None;
    let mut config = SessionConfig::default();
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed upload: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("malformed upload: {e}")))?;
        match name.as_str() {
            "noisy" => noisy = Some(decode_part(&name, &bytes)?),
            "ground_truth" => ground_truth = Some(decode_part(&name, &bytes)?),
            "deep" => deep = Some(decode_part(&name, &bytes)?),
            "confidence" => {
                let text = std::str::from_utf8(&bytes).map_err(|_| ApiError::bad_request("confidence: not UTF-8"))?;
                conf = Some(
                    ConfidenceMap::from_cmap_str(text)
                        .map_err(|e| ApiError::bad_request(format!("confidence: {e}")))?,
                );
            }
            "config" => {
                config = serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("config: {e}")))?;
            }
            other => return Err(ApiError::bad_request(format!("unexpected field {other:?}"))),
        }
    }
    let noisy = noisy.ok_or_else(|| ApiError::bad_request("missing `noisy` image"))?;
    let input = SessionInput {
        noisy,
        ground_truth,
        deep,
        confidence: conf,
        config,
    };
    let worker = state.clone();
    let session = blocking(move || {
        let inner = &worker.inner;
        let id = uuid::Uuid::new_v4().simple().to_string();
        Ok(Session::build(id, input, &inner.config.default_deep, &inner.model)?)
    })
    .await?;
    let info = session.info();
    state
        .inner
        .store
        .lock()
        .expect("session store lock")
        .insert(Arc::new(session));
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    Ok(Json(state.session(&id)?.info()))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    if state.inner.store.lock().expect("session store lock").remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found(format!("no session {id:?}")))
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct FuseQuery {
    pub mode: Option<String>,
    pub w: Option<String>,
    pub conf: Option<String>,
    pub schedule: Option<String>,
}

fn parse_key(session: &Session, q: &FuseQuery) -> ApiResult<FuseKey> {
    let mode: FusionMode = match &q.mode {
        Some(m) => m
            .parse()
            .map_err(|e: ccid_core::Error| ApiError::bad_request(e.to_string()))?,
        None => FusionMode::Dct,
    };
    let w = match &q.w {
        Some(s) => s
            .parse::<f64>()
            .map_err(|_| ApiError::bad_request(format!("bad weight {s:?}")))?,
        None => 0.5,
    };
    if !(0.0..=1.0).contains(&w) {
        return Err(ApiError::bad_request(format!("weight {w} outside [0, 1]")));
    }
    let schedule: Schedule = match &q.schedule {
        Some(s) => s
            .parse()
            .map_err(|e: ccid_core::Error| ApiError::bad_request(e.to_string()))?,
        None => Schedule::LowFirst,
    };
    let conf = match q.conf.as_deref() {
        None | Some("default") => session.default_conf,
        Some("none") => None,
        Some(s) => Some(s.parse::<ConfTag>().map_err(|e| ApiError::bad_request(e.to_string()))?),
    };
    if let (FusionMode::DwtConf, Some(tag)) = (mode, conf) {
        session.confidence(tag)?;
    }
    Ok(FuseKey::new(mode, w, schedule, conf))
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(CONTENT_TYPE, HeaderValue::from_static("image/png"))], bytes).into_response()
}

fn header_value(v: f64) -> HeaderValue {
    HeaderValue::from_str(&v.to_string()).expect("numbers are valid header values")
}

async fn render(state: &AppState, id: &str, q: &FuseQuery) -> ApiResult<Arc<Rendered>> {
    let session = state.session(id)?;
    let key = parse_key(&session, q)?;
    blocking(move || Ok(session.render(key)?)).await
}

async fn fused(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FuseQuery>,
) -> ApiResult<Response> {
    let rendered = render(&state, &id, &q).await?;
    let mut resp = png_response(rendered.png.clone());
    if let Some(m) = rendered.metrics {
        let headers = resp.headers_mut();
        headers.insert(PSNR_HEADER, header_value(m.psnr_db));
        headers.insert(SSIM_HEADER, header_value(m.ssim));
    }
    Ok(resp)
}

/// JSON form of a metric report; an infinite PSNR is written as `"inf"`.
pub fn metrics_json(m: &MetricReport) -> serde_json::Value {
    let psnr = if m.psnr_db.is_finite() {
        json!(m.psnr_db)
    } else {
        json!(m.psnr_db.to_string())
    };
    json!({ "psnr_db": psnr, "ssim": m.ssim })
}

async fn metrics(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FuseQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let session = state.session(&id)?;
    if session.ground_truth.is_none() {
        return Err(ApiError::conflict("metrics need a ground-truth upload"));
    }
    let rendered = render(&state, &id, &q).await?;
    let m = rendered
        .metrics
        .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "image too small for SSIM"))?;
    Ok(Json(metrics_json(&m)))
}

#[derive(Debug, Default, Deserialize)]
pub struct ConfidenceQuery {
    pub source: Option<String>,
    pub threshold: Option<String>,
    pub format: Option<String>,
}

async fn confidence(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ConfidenceQuery>,
) -> ApiResult<Response> {
    let session = state.session(&id)?;
    let tag = match q.source.as_deref() {
        None | Some("default") => session.default_conf.unwrap_or(ConfTag::Model),
        Some(s) => s.parse::<ConfTag>().map_err(|e| ApiError::bad_request(e.to_string()))?,
    };
    let map = session.confidence(tag)?;
    match q.format.as_deref().unwrap_or("overlay") {
        "cmap" => Ok(([(CONTENT_TYPE, "text/plain; charset=utf-8")], map.to_cmap_string()).into_response()),
        "overlay" => {
            let threshold = match &q.threshold {
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| ApiError::bad_request(format!("bad threshold {s:?}")))?,
                None => DEFAULT_OVERLAY_THRESHOLD,
            };
            let (w, h) = session.dims();
            let png = render_overlay_png(map, threshold, w, h)?;
            Ok(png_response(png))
        }
        other => Err(ApiError::bad_request(format!(
            "unknown format {other:?}; use overlay or cmap"
        ))),
    }
}

async fn plane(state: &AppState, id: &str, pick: fn(&Session) -> Option<&ImagePlane>) -> ApiResult<Response> {
    let session = state.session(id)?;
    let img = pick(&session).ok_or_else(|| ApiError::conflict("no ground truth was uploaded"))?;
    Ok(png_response(encode_png(img)))
}

async fn noisy(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    plane(&state, &id, |s| Some(&s.noisy)).await
}

async fn reliable(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    plane(&state, &id, |s| Some(s.fuser.reliable())).await
}

async fn deep(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    plane(&state, &id, |s| Some(s.fuser.deep())).await
}

async fn ground_truth(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    plane(&state, &id, |s| s.ground_truth.as_ref()).await
}
