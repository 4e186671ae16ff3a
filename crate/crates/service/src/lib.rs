//! HTTP front end for a trained classifier.
//!
//! Routes:
//! - `POST /classify`: raw image body or multipart upload, answers with a
//!   [`ClassificationResult`](aedes_core::ClassificationResult) as JSON.
//! - `GET /healthz`: liveness plus the loaded model version.
//! - `GET /model/info`: layer table, input shape, class names, threshold.
//!
//! The model is loaded once and shared read-only between requests.

mod config;
mod error;
mod routes;

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aedes_core::modelfmt;
use aedes_core::Model;
use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;

pub use config::{CorsPolicy, ServiceConfig, DEFAULT_MAX_UPLOAD_BYTES, DEFAULT_REQUEST_TIMEOUT};
pub use error::{ApiError, ErrorCode};
pub use routes::model_info;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("could not load model {}: {source}", path.display())]
    Load {
        path: PathBuf,
        #[source]
        source: aedes_core::Error,
    },
    #[error("could not bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub(crate) struct AppState {
    pub model: Arc<Model>,
    pub info: Arc<serde_json::Value>,
    pub config: Arc<ServiceConfig>,
    pub permits: Option<Arc<tokio::sync::Semaphore>>,
}

/// Builds the router around an already loaded model.
pub fn router(model: Arc<Model>, config: ServiceConfig) -> Router {
    let permits = config
        .max_concurrent_inferences
        .map(|n| Arc::new(tokio::sync::Semaphore::new(n.max(1))));
    let state = AppState {
        info: Arc::new(model_info(&model)),
        model,
        permits,
        config: Arc::new(config.clone()),
    };
    let router = Router::new()
        .route("/classify", post(routes::classify))
        .route("/healthz", get(routes::healthz))
        .route("/model/info", get(routes::info))
        .fallback(routes::not_found)
        .layer(DefaultBodyLimit::max(config.max_upload_bytes))
        .with_state(state);
    match config.cors.layer() {
        Some(cors) => router.layer(cors),
        None => router,
    }
}

/// Loads an artifact, applying an optional threshold override.
pub fn load_model(path: &Path, threshold: Option<f32>) -> Result<Model, ServiceError> {
    let load_err = |source| ServiceError::Load {
        path: path.to_path_buf(),
        source,
    };
    let mut model = modelfmt::load_model(path).map_err(load_err)?;
    if let Some(t) = threshold {
        model.set_threshold(t).map_err(load_err)?;
    }
    Ok(model)
}

/// Serves on an existing listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    model: Arc<Model>,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let app = router(model, config);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Binds `addr` and serves the model until Ctrl-C.
pub async fn serve(model: Model, addr: &str, config: ServiceConfig) -> Result<(), ServiceError> {
    let listener = TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind {
        addr: addr.to_string(),
        source,
    })?;
    let local: SocketAddr = listener.local_addr()?;
    tracing::info!(%local, version = %model.meta().version, "serving");
    serve_on(listener, Arc::new(model), config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
