//! Local HTTP service for the layout editor: live render preview, template
//! catalog, single-scene generation and the UI bundle.
//!
//! Every handler builds its response from the request alone, so requests are
//! independent and may run concurrently. Renders run on the blocking pool
//! under the configured timeout.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::api::{self, check_version, parse_json, ProcgenRequest, RenderRequest};
use crate::error::{Class, CliError};

pub const DEFAULT_PORT: u16 = 8765;
pub const DEFAULT_BODY_LIMIT: usize = 1 << 20;
pub const DEFAULT_RENDER_TIMEOUT: Duration = Duration::from_secs(20);

const FALLBACK_INDEX: &str = include_str!("../assets/index.html");

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Directory holding the built UI (`index.html` and assets).
    pub static_dir: Option<PathBuf>,
    pub body_limit: usize,
    pub render_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            static_dir: None,
            body_limit: DEFAULT_BODY_LIMIT,
            render_timeout: DEFAULT_RENDER_TIMEOUT,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.render_timeout.is_zero() {
            return Err(CliError::input("invalid_config", "render timeout must be positive"));
        }
        if self.body_limit == 0 {
            return Err(CliError::input("invalid_config", "body limit must be positive"));
        }
        if let Some(d) = &self.static_dir {
            if !d.is_dir() {
                return Err(CliError::input("invalid_config", format!("static dir {} does not exist", d.display())));
            }
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

struct ApiError {
    status: StatusCode,
    err: CliError,
}

impl From<CliError> for ApiError {
    fn from(err: CliError) -> Self {
        let status = match err.class {
            Class::Input => StatusCode::BAD_REQUEST,
            Class::Runtime => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self { status, err }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "v": api::API_VERSION, "error": self.err }))).into_response()
    }
}

async fn run_blocking<T: Send + 'static>(
    timeout: Duration,
    f: impl FnOnce() -> Result<T, CliError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::time::timeout(timeout, tokio::task::spawn_blocking(f)).await {
        Err(_) => Err(ApiError {
            status: StatusCode::GATEWAY_TIMEOUT,
            err: CliError::runtime("timeout", format!("render exceeded {} ms", timeout.as_millis())),
        }),
        Ok(Err(join)) => Err(CliError::runtime("internal", join.to_string()).into()),
        Ok(Ok(r)) => r.map_err(ApiError::from),
    }
}

async fn render(State(cfg): State<ServiceConfig>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| CliError::input("json", format!("request body is not UTF-8: {e}")))?;
    let req: RenderRequest = parse_json(text, "request")?;
    check_version(req.v)?;
    let layout = req.layout.normalized();
    let out = run_blocking(cfg.render_timeout, move || {
        let r = api::render(&layout, &req.options, req.mode)?;
        api::render_response(&r)
    })
    .await?;
    Ok(Json(out))
}

async fn procgen(State(cfg): State<ServiceConfig>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|e| CliError::input("json", format!("request body is not UTF-8: {e}")))?;
    let req: ProcgenRequest = parse_json(text, "request")?;
    let resp = run_blocking(cfg.render_timeout, move || api::procgen_round(req)).await?;
    Ok(Json(serde_json::to_value(resp).expect("response serializes")))
}

async fn templates() -> Json<api::TemplatesResponse> {
    Json(api::templates())
}

async fn fallback_index() -> Html<&'static str> {
    Html(FALLBACK_INDEX)
}

pub fn router(cfg: ServiceConfig) -> Router {
    let limit = cfg.body_limit;
    let static_dir = cfg.static_dir.clone();
    let app = Router::new()
        .route("/api/render", post(render))
        .route("/api/procgen", post(procgen))
        .route("/api/templates", get(templates))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(cfg);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(fallback_index)),
    }
}

pub async fn serve(cfg: ServiceConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let addr = cfg.addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::runtime("io", format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on http://{}", listener.local_addr().map_err(|e| CliError::runtime("io", e.to_string()))?);
    axum::serve(listener, router(cfg))
        .await
        .map_err(|e| CliError::runtime("io", e.to_string()))
}
