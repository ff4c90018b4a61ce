//! HTTP review service.
//!
//! | route               | body                                   |
//! |---------------------|----------------------------------------|
//! | `POST /api/predict` | raw image bytes                        |
//! | `POST /api/explain` | `{image_id, method, params}`           |
//! | `POST /api/reviews` | `{image_id, decision, corrected_label?, note?, explanation?}` |
//! | `GET /api/reviews`  | records, newest first                  |
//! | `GET /api/health`   |                                        |
//!
//! Everything else falls through to the static UI directory, if any.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use octx_core::data::preprocess_bytes;
use octx_core::net::weights::load_weights;
use octx_core::net::Prediction;
use octx_core::{Class, OctNet, NUM_CLASSES};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::audit::{AuditLog, Decision, ExplanationUsed, ImageRef, ReviewRecord};
use crate::config::ServiceConfig;
use crate::panels::{render_panels, ExplainParams, Method};
use crate::store::ImageStore;

pub const AUDIT_FILE: &str = "audit.log";

pub struct AppState {
    model: Option<Arc<OctNet>>,
    store: ImageStore,
    audit: AuditLog,
    config: ServiceConfig,
    predictions: RwLock<HashMap<String, Prediction>>,
    last_explanation: Mutex<HashMap<String, ExplanationUsed>>,
}

impl AppState {
    /// Loads the weights named in `config`; failure to load is fatal.
    pub fn open(config: ServiceConfig) -> anyhow::Result<Self> {
        let net = load_weights(&config.weights)?;
        Self::with_model(Some(net), config)
    }

    /// `None` runs without a model; prediction routes then answer 503.
    pub fn with_model(model: Option<OctNet>, config: ServiceConfig) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&config.storage)?;
        let store = ImageStore::open(&config.storage)?;
        let audit = AuditLog::open(config.storage.join(AUDIT_FILE))?;
        log::info!("audit log {} holds {} records", audit.path().display(), audit.len());
        Ok(Self {
            model: model.map(Arc::new),
            store,
            audit,
            config,
            predictions: RwLock::new(HashMap::new()),
            last_explanation: Mutex::new(HashMap::new()),
        })
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        log::error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }

    fn unknown_image(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown image_id {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

fn model(state: &AppState) -> ApiResult<Arc<OctNet>> {
    state
        .model
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model not loaded"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probs: [f32; NUM_CLASSES],
    pub label: Class,
    pub image_id: String,
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<PredictResponse>> {
    let net = model(&state)?;
    let st = state.clone();
    let (id, prediction) = blocking(move || -> ApiResult<(String, Prediction)> {
        let image = preprocess_bytes(&body, Path::new("upload"))
            .map_err(|e| ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, e.to_string()))?;
        let id = st.store.put(&body).map_err(ApiError::internal)?;
        let p = net.predict(&image).map_err(ApiError::internal)?;
        Ok((id, p))
    })
    .await??;
    state.predictions.write().expect("lock").insert(id.clone(), prediction.clone());
    Ok(Json(PredictResponse {
        probs: prediction.probs,
        label: prediction.label,
        image_id: id,
    }))
}

/// The cached prediction for a stored image, recomputed after a restart.
async fn prediction_for(state: &Arc<AppState>, id: &str) -> ApiResult<(Vec<u8>, Prediction)> {
    let bytes = state
        .store
        .get(id)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::unknown_image(id))?;
    if let Some(p) = state.predictions.read().expect("lock").get(id) {
        return Ok((bytes, p.clone()));
    }
    let net = model(state)?;
    let b = bytes.clone();
    let p = blocking(move || -> ApiResult<Prediction> {
        let image = preprocess_bytes(&b, Path::new("stored")).map_err(ApiError::internal)?;
        net.predict(&image).map_err(ApiError::internal)
    })
    .await??;
    state.predictions.write().expect("lock").insert(id.to_string(), p.clone());
    Ok((bytes, p))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainRequest {
    pub image_id: String,
    pub method: Method,
    #[serde(default)]
    pub params: ExplainParams,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EncodedPanel {
    pub name: String,
    pub png_base64: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub image_id: String,
    pub method: Method,
    pub panels: Vec<EncodedPanel>,
    /// The same document the CLI writes as `explanation.json`.
    pub explanation: serde_json::Value,
}

async fn explain(State(state): State<Arc<AppState>>, Json(req): Json<ExplainRequest>) -> ApiResult<Json<ExplainResponse>> {
    let net = model(&state)?;
    state
        .config
        .bounds
        .check(&req.params)
        .map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m))?;
    let bytes = state
        .store
        .get(&req.image_id)
        .map_err(ApiError::internal)?
        .ok_or_else(|| ApiError::unknown_image(&req.image_id))?;
    let (method, params) = (req.method, req.params.clone());
    let set = blocking(move || -> ApiResult<_> {
        let image = preprocess_bytes(&bytes, Path::new("stored")).map_err(ApiError::internal)?;
        render_panels(&net, &image, method, &params).map_err(ApiError::internal)
    })
    .await??;
    state.last_explanation.lock().expect("lock").insert(
        req.image_id.clone(),
        ExplanationUsed {
            method: req.method,
            samples: req.params.samples,
            features: req.params.features,
            seed: req.params.seed,
        },
    );
    let b64 = base64::engine::general_purpose::STANDARD;
    Ok(Json(ExplainResponse {
        image_id: req.image_id,
        method: req.method,
        panels: set
            .panels
            .iter()
            .map(|p| EncodedPanel {
                name: p.name.to_string(),
                png_base64: b64.encode(&p.png),
            })
            .collect(),
        explanation: serde_json::from_slice(&set.data).map_err(ApiError::internal)?,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewRequest {
    pub image_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub corrected_label: Option<Class>,
    #[serde(default)]
    pub note: String,
    /// Defaults to the last explanation served for this image.
    #[serde(default)]
    pub explanation: Option<ExplanationUsed>,
}

async fn add_review(
    State(state): State<Arc<AppState>>,
    Json(req): Json<ReviewRequest>,
) -> ApiResult<(StatusCode, Json<ReviewRecord>)> {
    let (_, prediction) = prediction_for(&state, &req.image_id).await?;
    let explanation = req
        .explanation
        .or_else(|| state.last_explanation.lock().expect("lock").get(&req.image_id).cloned());
    let record = ReviewRecord {
        record_id: uuid::Uuid::new_v4().to_string(),
        image: ImageRef {
            sha256: req.image_id.clone(),
            path: format!("images/{}", req.image_id),
        },
        predicted_label: prediction.label,
        probabilities: prediction.probs,
        explanation,
        decision: req.decision,
        corrected_label: req.corrected_label,
        note: req.note,
        timestamp: chrono::Utc::now(),
    };
    record
        .check_decision()
        .map_err(|m| ApiError::new(StatusCode::CONFLICT, m))?;
    let st = state.clone();
    let stored = blocking(move || st.audit.append(record)).await?.map_err(ApiError::internal)?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn list_reviews(State(state): State<Arc<AppState>>) -> Json<Vec<ReviewRecord>> {
    Json(state.audit.newest_first())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "model_loaded": state.model.is_some(),
        "reviews": state.audit.len(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    let ui = state.config.ui_dir.clone();
    let api = Router::new()
        .route("/api/predict", post(predict))
        .route("/api/explain", post(explain))
        .route("/api/reviews", post(add_review).get(list_reviews))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds, prints `listening on <addr>` to stdout and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    let addr: SocketAddr = listener.local_addr()?;
    let state = Arc::new(AppState::open(config)?);
    println!("listening on {addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
