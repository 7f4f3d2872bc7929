//! Stateless HTTP API over the balance pipeline.
//!
//! `POST /api/{region,zmp-area,impulse,maxvel}` take a stance document with
//! an optional top-level `options` object and answer with the same document
//! the command line writes. Errors carry `{code, stage, message,
//! field_path?}`.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use balance_kit_core::report::{error_document, run_command, Command, RunOptions, VERSION};
use balance_kit_core::stance::load_stance_value;
use balance_kit_core::{Error, ErrorClass};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const BODY_LIMIT: usize = 1 << 20;
pub const MAX_DIRS_CAP: usize = 128;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Requests computed at the same time; further requests wait.
    pub workers: usize,
    pub timeout: Duration,
    /// Allowed CORS origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
            timeout: DEFAULT_TIMEOUT,
            cors_origin: None,
        }
    }
}

impl ServiceConfig {
    /// Defaults overridden by `BALANCE_KIT_WORKERS` and `BALANCE_KIT_CORS_ORIGIN`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Some(n) = std::env::var("BALANCE_KIT_WORKERS").ok().and_then(|v| v.parse().ok()) {
            c.workers = n;
        }
        c.cors_origin = std::env::var("BALANCE_KIT_CORS_ORIGIN").ok().filter(|s| !s.is_empty());
        c
    }
}

struct AppState {
    permits: Semaphore,
    timeout: Duration,
}

pub fn app(config: ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        permits: Semaphore::new(config.workers.max(1)),
        timeout: config.timeout,
    });
    let origin = match config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(v)) => AllowOrigin::exact(v),
        _ => AllowOrigin::any(),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/region", post(|s, b| compute(s, b, Command::Region)))
        .route("/api/zmp-area", post(|s, b| compute(s, b, Command::ZmpArea)))
        .route("/api/impulse", post(|s, b| compute(s, b, Command::Impulse)))
        .route("/api/maxvel", post(|s, b| compute(s, b, Command::Maxvel)))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(cors)
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": VERSION }))
}

async fn not_found() -> Response {
    let body = json!({ "code": "not_found", "stage": "routing", "message": "no such endpoint" });
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

fn status_for(err: &Error) -> StatusCode {
    match err.class() {
        ErrorClass::Input => StatusCode::BAD_REQUEST,
        ErrorClass::Infeasible => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorClass::Solver => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn error_response(err: &Error, command: Command) -> Response {
    (status_for(err), Json(error_document(err, command))).into_response()
}

/// Splits the request into stance document and options.
fn parse_request(body: &[u8]) -> Result<(Value, RunOptions), Error> {
    let mut value: Value = serde_json::from_slice(body).map_err(|e| Error::Schema {
        path: String::new(),
        message: format!("request body is not valid JSON: {e}"),
    })?;
    let options = match value.as_object_mut().and_then(|m| m.remove("options")) {
        Some(raw) => serde_json::from_value::<RunOptions>(raw).map_err(|e| Error::Schema {
            path: "options".into(),
            message: e.to_string(),
        })?,
        None => RunOptions::default(),
    };
    if options.max_dirs.is_some_and(|m| m > MAX_DIRS_CAP) {
        return Err(Error::validation(
            "options.max_dirs",
            format!("must not exceed {MAX_DIRS_CAP} on this server"),
        ));
    }
    Ok((value, options))
}

async fn compute(State(state): State<Arc<AppState>>, body: Result<Bytes, BytesRejection>, command: Command) -> Response {
    let body = match body {
        Ok(b) => b,
        Err(rejection) => {
            let status = rejection.status();
            let body = json!({ "code": "bad_body", "stage": "load", "message": rejection.body_text() });
            return (status, Json(body)).into_response();
        }
    };
    let (value, options) = match parse_request(&body) {
        Ok(parts) => parts,
        Err(err) => return error_response(&err, command),
    };
    let work = async {
        let _permit = state.permits.acquire().await.expect("semaphore is never closed");
        tokio::task::spawn_blocking(move || {
            let loaded = load_stance_value(value)?;
            run_command(command, &loaded, &options)
        })
        .await
    };
    match tokio::time::timeout(state.timeout, work).await {
        Err(_) => {
            let body = json!({
                "code": "timeout",
                "stage": command.as_str(),
                "message": format!("computation exceeded {} s", state.timeout.as_secs_f64()),
            });
            (StatusCode::GATEWAY_TIMEOUT, Json(body)).into_response()
        }
        Ok(Err(join)) => {
            let err = Error::SolverFailure {
                stage: command.as_str().into(),
                message: format!("worker failed: {join}"),
            };
            error_response(&err, command)
        }
        Ok(Ok(Err(err))) => error_response(&err, command),
        Ok(Ok(Ok(report))) => (StatusCode::OK, Json(report.document)).into_response(),
    }
}
