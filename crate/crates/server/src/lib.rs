//! HTTP front end for a frozen [`ModelBundle`]: decoding spectra and
//! latents, encoding shapes, band edits, style transfer and sample
//! browsing, all as JSON request/response pairs.
//!
//! Handlers are pure functions of the loaded bundle and the request body.
//! The bundle sits behind an `Arc` and can be swapped atomically with
//! [`AppState::load_model`].

mod error;

pub use error::ApiError;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, Query, Request, State};
use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use specshape::apps::{band_modify, style_transfer, AlignmentPoint, StyleTransferConfig};
use specshape::experiment::FamilyData;
use specshape::spectral_ae::{InputKind, ModelBundle};
use tower_http::cors::{AllowOrigin, CorsLayer};

/// Shared, cheaply cloneable server state.
#[derive(Clone, Default)]
pub struct AppState {
    model: Arc<RwLock<Option<Arc<ModelBundle>>>>,
    samples: Option<Arc<FamilyData>>,
}

impl AppState {
    pub fn new(model: Option<ModelBundle>, samples: Option<FamilyData>) -> AppState {
        AppState {
            model: Arc::new(RwLock::new(model.map(Arc::new))),
            samples: samples.map(Arc::new),
        }
    }

    /// Replace the served model; requests already running keep the old one.
    pub fn load_model(&self, bundle: ModelBundle) {
        *self.model.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(bundle));
    }

    pub fn model(&self) -> Result<Arc<ModelBundle>, ApiError> {
        self.model
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
            .ok_or(ApiError::NotLoaded)
    }

    fn samples(&self) -> Result<Arc<FamilyData>, ApiError> {
        self.samples.clone().ok_or(ApiError::NoSamples)
    }
}

/// JSON body extractor whose failures are 400s in the service's error
/// format (axum's own `Json` answers 422 for type errors).
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::BadRequest {
                field: None,
                message: e.to_string(),
            })?;
        serde_json::from_slice(&bytes).map(Body).map_err(|e| ApiError::BadRequest {
            field: None,
            message: format!("malformed request body: {e}"),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeRequest {
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeLatentRequest {
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerticesResponse {
    pub vertices: Vec<Vec<f64>>,
}

/// Points in template order for dense models, any order and count for
/// point-set models. Other keys (faces, say) are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeBody {
    pub vertices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeRequest {
    pub shape: ShapeBody,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncodeResponse {
    pub latent: Vec<f64>,
    pub predicted_spectrum: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleTransferRequest {
    pub spec_style: Vec<f64>,
    pub pose_sample_id: usize,
    pub w: Option<f64>,
    pub steps: Option<usize>,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StyleTransferResponse {
    pub vertices: Vec<Vec<f64>>,
    pub latent: Vec<f64>,
    pub best_step: usize,
    pub alignment: Vec<AlignmentPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandRequest {
    pub base_spectrum: Vec<f64>,
    pub lo: usize,
    pub hi: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BandResponse {
    pub spectrum: Vec<f64>,
    pub vertices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesQuery {
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub spectrum: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplesResponse {
    pub total: usize,
    pub samples: Vec<Sample>,
}

/// Samples returned when `n` is not given.
const DEFAULT_SAMPLES: usize = 16;

fn check_values(field: &str, values: &[f64], expected: usize) -> Result<(), ApiError> {
    if values.len() != expected {
        return Err(ApiError::field(field, format!("expected {expected} values, got {}", values.len())));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(ApiError::field(field, format!("value {i} is not finite")));
    }
    Ok(())
}

/// Group flat coordinates into points, refusing non-finite output (JSON
/// has no NaN).
fn vertices(flat: &[f64], dim: usize) -> Result<Vec<Vec<f64>>, ApiError> {
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::Numerical("decoder produced non-finite coordinates".into()));
    }
    Ok(flat.chunks(dim).map(<[f64]>::to_vec).collect())
}

fn decode_spectrum(model: &ModelBundle, spectrum: &[f64]) -> Result<Vec<Vec<f64>>, ApiError> {
    vertices(&model.decode(&model.spec_to_latent(spectrum)?)?, model.template.dim)
}

/// Run `f` on the current model off the async executor.
async fn with_model<T: Send + 'static>(
    state: &AppState,
    f: impl FnOnce(&ModelBundle) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let model = state.model()?;
    tokio::task::spawn_blocking(move || f(&model))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn model_info(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let m = state.model()?;
    Ok(Json(json!({
        "kind": m.kind,
        "k": m.k,
        "latent_dim": m.latent_dim,
        "template": m.template,
        "normalization": m.norm,
    })))
}

async fn decode(State(state): State<AppState>, Body(req): Body<DecodeRequest>) -> Result<Json<VerticesResponse>, ApiError> {
    with_model(&state, move |m| {
        check_values("eigenvalues", &req.eigenvalues, m.k)?;
        Ok(Json(VerticesResponse {
            vertices: decode_spectrum(m, &req.eigenvalues)?,
        }))
    })
    .await
}

async fn decode_latent(
    State(state): State<AppState>,
    Body(req): Body<DecodeLatentRequest>,
) -> Result<Json<VerticesResponse>, ApiError> {
    with_model(&state, move |m| {
        check_values("latent", &req.latent, m.latent_dim)?;
        Ok(Json(VerticesResponse {
            vertices: vertices(&m.decode(&req.latent)?, m.template.dim)?,
        }))
    })
    .await
}

async fn encode(State(state): State<AppState>, Body(req): Body<EncodeRequest>) -> Result<Json<EncodeResponse>, ApiError> {
    with_model(&state, move |m| {
        let dim = m.template.dim;
        let pts = &req.shape.vertices;
        if let Some(i) = pts.iter().position(|p| p.len() != dim) {
            return Err(ApiError::field("shape.vertices", format!("vertex {i} does not have {dim} coordinates")));
        }
        if m.kind == InputKind::DenseTemplate && pts.len() != m.template.n {
            return Err(ApiError::field(
                "shape.vertices",
                format!("the template has {} vertices, got {}", m.template.n, pts.len()),
            ));
        }
        let flat: Vec<f64> = pts.iter().flatten().copied().collect();
        check_values("shape.vertices", &flat, flat.len())?;
        if flat.is_empty() {
            return Err(ApiError::field("shape.vertices", "no vertices"));
        }
        let latent = m.encode(&flat)?;
        let predicted_spectrum = m.latent_to_spec(&latent)?;
        if latent.iter().chain(&predicted_spectrum).any(|v| !v.is_finite()) {
            return Err(ApiError::Numerical("encoder produced non-finite values".into()));
        }
        Ok(Json(EncodeResponse {
            latent,
            predicted_spectrum,
        }))
    })
    .await
}

async fn style(
    State(state): State<AppState>,
    Body(req): Body<StyleTransferRequest>,
) -> Result<Json<StyleTransferResponse>, ApiError> {
    let samples = state.samples()?;
    with_model(&state, move |m| {
        check_values("spec_style", &req.spec_style, m.k)?;
        let pose = samples
            .manifest
            .samples
            .iter()
            .position(|s| s.id == req.pose_sample_id)
            .ok_or_else(|| ApiError::field("pose_sample_id", format!("no sample {}", req.pose_sample_id)))?;
        let mut cfg = StyleTransferConfig::default();
        cfg.w = req.w.unwrap_or(cfg.w);
        cfg.steps = req.steps.unwrap_or(cfg.steps);
        cfg.lr = req.lr.unwrap_or(cfg.lr);
        cfg.patience = req.patience.unwrap_or(cfg.patience);
        cfg.validate()?;
        let st = style_transfer(m, &req.spec_style, &samples.shapes[pose], &cfg)?;
        Ok(Json(StyleTransferResponse {
            vertices: vertices(&st.shape.flat_coords(), m.template.dim)?,
            latent: st.latent,
            best_step: st.best_step,
            alignment: st.curve,
        }))
    })
    .await
}

async fn band(State(state): State<AppState>, Body(req): Body<BandRequest>) -> Result<Json<BandResponse>, ApiError> {
    with_model(&state, move |m| {
        check_values("base_spectrum", &req.base_spectrum, m.k)?;
        if req.lo > req.hi || req.hi >= m.k {
            return Err(ApiError::field("hi", format!("band {}..={} outside 0..{}", req.lo, req.hi, m.k)));
        }
        if !(req.factor > 0.0 && req.factor.is_finite()) {
            return Err(ApiError::field("factor", "factor must be positive and finite"));
        }
        let spectrum = band_modify(&req.base_spectrum, req.lo, req.hi, req.factor)?;
        let vertices = decode_spectrum(m, &spectrum)?;
        Ok(Json(BandResponse { spectrum, vertices }))
    })
    .await
}

async fn samples(
    State(state): State<AppState>,
    query: Result<Query<SamplesQuery>, QueryRejection>,
) -> Result<Json<SamplesResponse>, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::field("n", e.body_text()))?;
    let data = state.samples()?;
    let k = state.model().map(|m| m.k).unwrap_or(data.k_max()).min(data.k_max());
    let n = q.n.unwrap_or(DEFAULT_SAMPLES).min(data.shapes.len());
    Ok(Json(SamplesResponse {
        total: data.shapes.len(),
        samples: data
            .manifest
            .samples
            .iter()
            .zip(&data.spectra)
            .take(n)
            .map(|(s, spec)| Sample {
                id: s.id,
                spectrum: spec[..k].to_vec(),
            })
            .collect(),
    }))
}

async fn api_listing() -> Json<Value> {
    Json(json!({
        "endpoints": [
            {"method": "GET", "path": "/model", "response": "{kind, k, latent_dim, template: {n, dim, faces?}, normalization}"},
            {"method": "POST", "path": "/decode", "request": "{eigenvalues: [k]}", "response": "{vertices: [[x, y, z]]}"},
            {"method": "POST", "path": "/decode-latent", "request": "{latent: [latent_dim]}", "response": "{vertices}"},
            {"method": "POST", "path": "/encode", "request": "{shape: {vertices}}", "response": "{latent, predicted_spectrum}"},
            {"method": "POST", "path": "/style-transfer", "request": "{spec_style: [k], pose_sample_id, w?, steps?, lr?, patience?}", "response": "{vertices, latent, best_step, alignment: [{step, objective, gap, drift}]}"},
            {"method": "GET", "path": "/samples?n=", "response": "{total, samples: [{id, spectrum}]}"},
            {"method": "POST", "path": "/band", "request": "{base_spectrum: [k], lo, hi, factor}", "response": "{spectrum, vertices}"},
            {"method": "GET", "path": "/api", "response": "this listing"}
        ],
        "errors": {
            "400": "malformed body or wrong lengths; body names the offending field",
            "422": "numerical failure",
            "503": "no model (or no sample dataset) loaded"
        }
    }))
}

fn is_local_origin(origin: &HeaderValue) -> bool {
    let Ok(o) = origin.to_str() else { return false };
    let rest = o.strip_prefix("http://").or_else(|| o.strip_prefix("https://")).unwrap_or("");
    ["localhost", "127.0.0.1", "[::1]"].iter().any(|host| {
        rest.strip_prefix(host)
            .is_some_and(|tail| tail.is_empty() || (tail.starts_with(':') && tail[1..].bytes().all(|b| b.is_ascii_digit())))
    })
}

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| is_local_origin(origin)))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/model", get(model_info))
        .route("/decode", post(decode))
        .route("/decode-latent", post(decode_latent))
        .route("/encode", post(encode))
        .route("/style-transfer", post(style))
        .route("/samples", get(samples))
        .route("/band", post(band))
        .route("/api", get(api_listing))
        .layer(cors)
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
