//! Live responses checked against the JSON schemas the web client is built from.

use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use aedes_core::imgpipe::{default_class_names, Preprocessor};
use aedes_core::train::{ModelSpec, DEFAULT_DROPOUT};
use aedes_core::{Model, ModelMeta, Rng};
use aedes_service::{router, ApiError, ErrorCode, ServiceConfig};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::response::IntoResponse;
use axum::Router;
use http_body_util::BodyExt;
use jsonschema::Validator;
use serde_json::Value;
use tower::ServiceExt;

const CLASSIFICATION: &str = include_str!("../../../schema/classification.schema.json");
const ERROR: &str = include_str!("../../../schema/error.schema.json");
const HEALTH: &str = include_str!("../../../schema/health.schema.json");
const MODEL_INFO: &str = include_str!("../../../schema/model_info.schema.json");

fn validator(src: &str) -> Validator {
    let schema: Value = serde_json::from_str(src).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(v: &Validator, instance: &Value) {
    let errors: Vec<String> = v.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{instance}\n{errors:#?}");
}

fn model(side: usize) -> Model {
    let net = ModelSpec::reference([side, side, 3], DEFAULT_DROPOUT)
        .build::<f32>(&Rng::new(3))
        .unwrap();
    let meta = ModelMeta {
        class_names: default_class_names(),
        threshold: 0.5,
        version: "schema-test".into(),
        seed: 3,
    };
    Model::new(net, Preprocessor::identity(3), meta).unwrap()
}

fn encode(buf: &[u8], w: u32, h: u32, color: image::ColorType) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(&mut out, buf, w, h, color, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn classify(bytes: Vec<u8>) -> Request<Body> {
    Request::post("/classify")
        .header(header::CONTENT_TYPE, "application/octet-stream")
        .body(Body::from(bytes))
        .unwrap()
}

#[tokio::test]
async fn success_bodies_match_their_schemas() {
    let app = router(Arc::new(model(32)), ServiceConfig::default());

    let (status, health) = call(&app, Request::get("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_valid(&validator(HEALTH), &health);

    let (_, info) = call(&app, Request::get("/model/info").body(Body::empty()).unwrap()).await;
    assert_valid(&validator(MODEL_INFO), &info);

    let rgb: Vec<u8> = (0..40 * 30 * 3).map(|i| (i % 251) as u8).collect();
    let gray: Vec<u8> = (0..20 * 20).map(|i| (i % 256) as u8).collect();
    let classification = validator(CLASSIFICATION);
    for (bytes, warned) in [
        (encode(&rgb, 40, 30, image::ColorType::Rgb8), false),
        (encode(&gray, 20, 20, image::ColorType::L8), true),
    ] {
        let (status, body) = call(&app, classify(bytes)).await;
        assert_eq!(status, StatusCode::OK);
        assert_valid(&classification, &body);
        assert_eq!(body["warnings"].as_array().unwrap().is_empty(), !warned);
    }
}

#[tokio::test]
async fn error_bodies_match_the_schema() {
    let errors = validator(ERROR);
    let config = ServiceConfig {
        max_upload_bytes: 64,
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(model(32)), config);
    let png = encode(&[7u8; 8 * 8 * 3], 8, 8, image::ColorType::Rgb8);
    let cases = [
        (classify(b"plain text".to_vec()), "unsupported_media_type"),
        (classify(Vec::new()), "empty_body"),
        (classify(png[..20].to_vec()), "invalid_image"),
        (classify(vec![0x89; 65]), "payload_too_large"),
        (Request::get("/nope").body(Body::empty()).unwrap(), "not_found"),
    ];
    for (req, code) in cases {
        let (status, body) = call(&app, req).await;
        assert!(!status.is_success());
        assert_eq!(body["error"]["code"], code);
        assert_valid(&errors, &body);
    }

    let slow = ServiceConfig {
        request_timeout: Duration::from_nanos(1),
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(model(96)), slow);
    let big = encode(&[9u8; 96 * 96 * 3], 96, 96, image::ColorType::Rgb8);
    let (status, body) = call(&app, classify(big)).await;
    assert_eq!(status, StatusCode::REQUEST_TIMEOUT);
    assert_valid(&errors, &body);
}

#[tokio::test]
async fn schema_enum_lists_every_error_code() {
    let all = [
        ErrorCode::UnsupportedMediaType,
        ErrorCode::PayloadTooLarge,
        ErrorCode::InvalidImage,
        ErrorCode::EmptyBody,
        ErrorCode::BadRequest,
        ErrorCode::Timeout,
        ErrorCode::NotFound,
        ErrorCode::Internal,
    ];
    let schema: Value = serde_json::from_str(ERROR).unwrap();
    let listed = schema["properties"]["error"]["properties"]["code"]["enum"].as_array().unwrap();
    assert_eq!(listed.len(), all.len());

    let errors = validator(ERROR);
    for code in all {
        let resp = ApiError::new(code, "x").into_response();
        assert_eq!(resp.status(), code.status());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        assert_valid(&errors, &serde_json::from_slice(&bytes).unwrap());
    }
    let bogus = serde_json::json!({"error": {"code": "teapot", "message": "x"}});
    assert!(!errors.is_valid(&bogus));
}
