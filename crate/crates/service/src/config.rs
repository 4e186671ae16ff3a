use std::time::Duration;

use axum::http::{header, HeaderValue, Method};
use tower_http::cors::{AllowOrigin, CorsLayer};

/// Upload cap: 10 MiB.
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 10 * 1024 * 1024;
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorsPolicy {
    /// Any origin may call the API.
    AnyOrigin,
    /// Only these exact origins, e.g. `http://localhost:5173`.
    Origins(Vec<String>),
    Disabled,
}

impl CorsPolicy {
    /// `*` means any origin, an empty string disables CORS, anything else is
    /// a comma-separated origin list.
    pub fn parse(spec: &str) -> Self {
        match spec.trim() {
            "*" => CorsPolicy::AnyOrigin,
            "" => CorsPolicy::Disabled,
            list => CorsPolicy::Origins(
                list.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
            ),
        }
    }

    pub(crate) fn layer(&self) -> Option<CorsLayer> {
        let base = CorsLayer::new()
            .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
            .allow_headers([header::CONTENT_TYPE]);
        match self {
            CorsPolicy::Disabled => None,
            CorsPolicy::AnyOrigin => Some(base.allow_origin(AllowOrigin::any())),
            CorsPolicy::Origins(list) => {
                let origins: Vec<HeaderValue> = list.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
                Some(base.allow_origin(AllowOrigin::list(origins)))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub max_upload_bytes: usize,
    pub request_timeout: Duration,
    pub cors: CorsPolicy,
    /// Caps simultaneous forward passes; `Some(1)` serializes inference.
    pub max_concurrent_inferences: Option<usize>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            cors: CorsPolicy::AnyOrigin,
            max_concurrent_inferences: None,
        }
    }
}
