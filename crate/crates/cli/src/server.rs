//! HTTP service for the drag editor.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use dragwarp_core::api::{
    decode_inline_mask, encode_base64, ErrorBody, SessionCreated, WarpRequest, WarpResponse,
};
use dragwarp_core::fgrid::read_fgrid;
use dragwarp_core::grid::{DepthMap, FeatureGrid};
use dragwarp_core::imageio::{depth_to_png, grid_to_png, image_to_grid, luminance_depth};
use dragwarp_core::pipeline::{warp_grid, PipelineError};

const MAX_BODY: usize = 32 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub assets: Option<PathBuf>,
    pub ttl: Duration,
    pub workers: usize,
    pub warp_budget: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            assets: None,
            ttl: Duration::from_secs(1800),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            warp_budget: Duration::from_secs(10),
        }
    }
}

struct Session {
    image: Arc<FeatureGrid>,
    depth: Arc<DepthMap>,
    last_used: Instant,
}

struct Inner {
    sessions: Mutex<HashMap<String, Session>>,
    ttl: Duration,
    workers: Arc<Semaphore>,
    warp_budget: Duration,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: &ServerConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                sessions: Mutex::new(HashMap::new()),
                ttl: config.ttl,
                workers: Arc::new(Semaphore::new(config.workers)),
                warp_budget: config.warp_budget,
            }),
        }
    }

    /// Drops sessions idle for longer than the TTL; returns how many.
    pub fn evict_expired(&self) -> usize {
        let now = Instant::now();
        let mut sessions = self.inner.sessions.lock().expect("session lock");
        let before = sessions.len();
        sessions.retain(|_, s| now.duration_since(s.last_used) < self.inner.ttl);
        before - sessions.len()
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().expect("session lock").len()
    }

    fn insert(&self, image: FeatureGrid, depth: DepthMap) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session {
            image: Arc::new(image),
            depth: Arc::new(depth),
            last_used: Instant::now(),
        };
        self.inner
            .sessions
            .lock()
            .expect("session lock")
            .insert(id.clone(), session);
        id
    }

    fn touch(&self, id: &str) -> Option<(Arc<FeatureGrid>, Arc<DepthMap>)> {
        self.evict_expired();
        let mut sessions = self.inner.sessions.lock().expect("session lock");
        let s = sessions.get_mut(id)?;
        s.last_used = Instant::now();
        Some((s.image.clone(), s.depth.clone()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl ToString) -> Self {
        Self {
            status,
            body: ErrorBody::new(code, detail.to_string()),
        }
    }

    fn bad_request(code: &str, detail: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e)
    }
}

pub fn router(state: AppState, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", post(create_session))
        .route("/api/warp", post(warp))
        .route("/api/session/{id}/depth.png", get(depth_png))
        .route("/api/{*rest}", axum::routing::any(api_not_found))
        .route("/healthz", get(|| async { "ok" }))
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(api_not_found),
    }
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

async fn create_session(
    State(state): State<AppState>,
    multipart: Result<Multipart, axum::extract::multipart::MultipartRejection>,
) -> Result<Json<SessionCreated>, ApiError> {
    let mut multipart = multipart.map_err(|e| ApiError::bad_request("bad_multipart", e.body_text()))?;
    let mut image = None;
    let mut depth = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request("bad_multipart", e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request("bad_multipart", e.body_text()))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "depth" => depth = Some(bytes),
            other => {
                return Err(ApiError::bad_request(
                    "unknown_field",
                    format!("unexpected multipart field `{other}`"),
                ))
            }
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing_image", "no `image` field"))?;
    let grid = image_to_grid(&image).map_err(|e| ApiError::bad_request("bad_image", e))?;
    let depth = match depth {
        Some(bytes) => {
            let g = read_fgrid(&bytes).map_err(|e| ApiError::bad_request("bad_depth", e))?;
            if g.channels() != 1 {
                return Err(ApiError::bad_request(
                    "bad_depth",
                    format!("depth grid has {} channels, expected 1", g.channels()),
                ));
            }
            DepthMap::new(g.height(), g.width(), g.into_data())
                .map_err(|e| ApiError::bad_request("bad_depth", e))?
        }
        None => luminance_depth(&grid).map_err(|e| ApiError::bad_request("bad_image", e))?,
    };
    let (h, w) = grid.shape();
    let id = state.insert(grid, depth);
    tracing::info!(%id, h, w, "session created");
    Ok(Json(SessionCreated { id, h, w }))
}

async fn depth_png(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let (_, depth) = state
        .touch(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_such_session", id.clone()))?;
    let png = depth_to_png(&depth)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "encode_failed", e))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

fn run_warp(
    image: &FeatureGrid,
    depth: &DepthMap,
    request: &WarpRequest,
) -> Result<WarpResponse, ApiError> {
    let mask = match &request.drags.mask {
        Some(field) => Some(decode_inline_mask(field).map_err(|e| ApiError::bad_request("bad_mask", e))?),
        None => None,
    };
    let outcome = warp_grid(
        image,
        depth,
        mask.as_ref(),
        &request.drags.pairs,
        &request.effective_params(),
    )?;
    let png = grid_to_png(&outcome.grid)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "encode_failed", e))?;
    Ok(WarpResponse {
        image_png: encode_base64(&png),
        drags: outcome.landings,
        diagnostics: outcome.diagnostics,
    })
}

async fn warp(State(state): State<AppState>, body: Bytes) -> Result<Json<WarpResponse>, ApiError> {
    let request = WarpRequest::from_json(&body).map_err(|e| {
        let code = if e.is_syntax() || e.is_eof() {
            "invalid_json"
        } else {
            "invalid_request"
        };
        ApiError::bad_request(code, e)
    })?;
    let (image, depth) = state
        .touch(&request.id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_such_session", request.id.clone()))?;

    let budget = state.inner.warp_budget;
    let busy = || ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "busy", "warp budget exceeded");
    let deadline = tokio::time::Instant::now() + budget;
    let permit = tokio::time::timeout_at(deadline, state.inner.workers.clone().acquire_owned())
        .await
        .map_err(|_| busy())?
        .map_err(|_| busy())?;
    // the permit lives as long as the computation, even past a timeout
    let job = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        run_warp(&image, &depth, &request)
    });
    let result = tokio::time::timeout_at(deadline, job).await.map_err(|_| busy())?;
    let response = result
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e))??;
    Ok(Json(response))
}

/// Serves until ctrl-c, evicting idle sessions once a minute (or per TTL if
/// shorter).
pub async fn serve(bind: &str, config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::new(&config);
    let app = router(state.clone(), config.assets.clone());
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let period = config.ttl.min(Duration::from_secs(60)).max(Duration::from_millis(100));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = state.evict_expired();
            if n > 0 {
                tracing::info!(evicted = n, "expired sessions");
            }
        }
    });
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
