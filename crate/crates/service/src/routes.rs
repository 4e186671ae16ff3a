use aedes_core::imgpipe::sniff_format;
use aedes_core::{classify as run_classify, ClassificationResult, Model};
use axum::body::Bytes;
use axum::extract::multipart::MultipartError;
use axum::extract::{FromRequest, Multipart, Request, State};
use axum::http::{header, StatusCode};
use axum::Json;
use serde_json::{json, Value};

use crate::error::{ApiError, ErrorCode};
use crate::AppState;

/// Static description of the loaded model served by `/model/info`.
pub fn model_info(model: &Model) -> Value {
    let meta = model.meta();
    let pre = model.preprocessor();
    let summary = model.spec().summary().ok();
    json!({
        "model_version": meta.version,
        "class_names": meta.class_names,
        "threshold": meta.threshold,
        "input_shape": model.input_shape(),
        "total_params": model.network().param_count(),
        "layers": summary.as_ref().map(|s| &s.rows),
        "summary": summary.as_ref().map(|s| s.to_string()),
        "preprocessing": {
            "rescale": "1/255",
            "normalize": { "mean": pre.norm.mean, "std": pre.norm.std },
            "zca": pre.zca.is_some(),
        },
    })
}

pub(crate) async fn healthz(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_version": state.model.meta().version }))
}

pub(crate) async fn info(State(state): State<AppState>) -> Json<Value> {
    Json((*state.info).clone())
}

pub(crate) async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such route")
}

pub(crate) async fn classify(
    State(state): State<AppState>,
    req: Request,
) -> Result<Json<ClassificationResult>, ApiError> {
    let limit = state.config.request_timeout;
    match tokio::time::timeout(limit, classify_request(state, req)).await {
        Ok(result) => result,
        Err(_) => Err(ApiError::new(
            ErrorCode::Timeout,
            format!("request took longer than {:.0} s", limit.as_secs_f64()),
        )),
    }
}

async fn classify_request(state: AppState, req: Request) -> Result<Json<ClassificationResult>, ApiError> {
    let bytes = read_upload(&state, req).await?;
    if bytes.is_empty() {
        return Err(ApiError::new(ErrorCode::EmptyBody, "request carried no image"));
    }
    if sniff_format(&bytes).is_none() {
        return Err(ApiError::new(
            ErrorCode::UnsupportedMediaType,
            "upload is not a PNG or JPEG image",
        ));
    }
    let permit = match &state.permits {
        Some(s) => Some(
            s.clone()
                .acquire_owned()
                .await
                .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?,
        ),
        None => None,
    };
    let model = state.model.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        run_classify(&model, &bytes)
    })
    .await
    .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?;
    match outcome {
        Ok(result) => Ok(Json(result)),
        Err(e @ aedes_core::Error::Decode { .. }) => Err(ApiError::new(ErrorCode::InvalidImage, e.to_string())),
        Err(e) => Err(ApiError::new(ErrorCode::Internal, e.to_string())),
    }
}

fn too_large(limit: usize) -> ApiError {
    ApiError::new(
        ErrorCode::PayloadTooLarge,
        format!("upload exceeds the {limit}-byte limit"),
    )
}

async fn read_upload(state: &AppState, req: Request) -> Result<Bytes, ApiError> {
    let limit = state.config.max_upload_bytes;
    let headers = req.headers();
    let declared = headers
        .get(header::CONTENT_LENGTH)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<usize>().ok());
    if declared.is_some_and(|n| n > limit) {
        return Err(too_large(limit));
    }
    let multipart = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.to_ascii_lowercase().starts_with("multipart/form-data"));

    if !multipart {
        return axum::body::to_bytes(req.into_body(), limit)
            .await
            .map_err(|_| too_large(limit));
    }

    let part_error = |e: MultipartError| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            too_large(limit)
        } else {
            ApiError::new(ErrorCode::BadRequest, e.body_text())
        }
    };
    let mut form = Multipart::from_request(req, state)
        .await
        .map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    let mut chosen = None;
    while let Some(field) = form.next_field().await.map_err(part_error)? {
        let preferred = matches!(field.name(), Some("image" | "file")) || field.file_name().is_some();
        let data = field.bytes().await.map_err(part_error)?;
        if preferred {
            return Ok(data);
        }
        chosen.get_or_insert(data);
    }
    chosen.ok_or_else(|| ApiError::new(ErrorCode::EmptyBody, "multipart upload had no fields"))
}
