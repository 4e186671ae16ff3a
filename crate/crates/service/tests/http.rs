use std::io::Cursor;
use std::sync::Arc;
use std::time::Duration;

use aedes_core::imgpipe::{default_class_names, Preprocessor};
use aedes_core::nn::{Dense, Flatten, Layer, Network, Sigmoid};
use aedes_core::train::{ModelSpec, DEFAULT_DROPOUT};
use aedes_core::{classify, Model, ModelMeta, Rng, Tensor};
use aedes_service::{router, CorsPolicy, ServiceConfig};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn reference_model(side: usize, seed: u64) -> Model {
    let net = ModelSpec::reference([side, side, 3], DEFAULT_DROPOUT)
        .build::<f32>(&Rng::new(seed))
        .unwrap();
    let meta = ModelMeta {
        class_names: default_class_names(),
        threshold: 0.5,
        version: format!("test-{seed}"),
        seed,
    };
    Model::new(net, Preprocessor::identity(3), meta).unwrap()
}

fn constant_model(p: f64) -> Model {
    let bias = (p / (1.0 - p)).ln() as f32;
    let dense = Dense::new(Tensor::zeros(&[4 * 4 * 3, 1]), Tensor::full(&[1], bias)).unwrap();
    let net = Network::from_layers(
        &[4, 4, 3],
        vec![
            Layer::Flatten(Flatten::default()),
            Layer::Dense(dense),
            Layer::Sigmoid(Sigmoid::default()),
        ],
    )
    .unwrap();
    let meta = ModelMeta {
        class_names: default_class_names(),
        threshold: 0.5,
        version: "const".into(),
        seed: 0,
    };
    Model::new(net, Preprocessor::identity(3), meta).unwrap()
}

fn png(w: u32, h: u32, salt: usize) -> Vec<u8> {
    let buf: Vec<u8> = (0..(w * h * 3) as usize).map(|i| ((i * 31 + salt * 7) % 256) as u8).collect();
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(&mut out, &buf, w, h, image::ColorType::Rgb8, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn app(model: Model) -> Router {
    router(Arc::new(model), ServiceConfig::default())
}

async fn send(app: Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Value) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, headers, json)
}

fn post_raw(bytes: Vec<u8>, content_type: &str) -> Request<Body> {
    Request::post("/classify")
        .header(header::CONTENT_TYPE, content_type)
        .body(Body::from(bytes))
        .unwrap()
}

fn multipart(fields: &[(&str, Option<&str>, &[u8])]) -> Request<Body> {
    let boundary = "XbOuNdArYx";
    let mut body = Vec::new();
    for (name, filename, data) in fields {
        body.extend_from_slice(format!("--{boundary}\r\n").as_bytes());
        let disposition = match filename {
            Some(f) => format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{f}\"\r\n"),
            None => format!("Content-Disposition: form-data; name=\"{name}\"\r\n"),
        };
        body.extend_from_slice(disposition.as_bytes());
        body.extend_from_slice(b"Content-Type: application/octet-stream\r\n\r\n");
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    Request::post("/classify")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

#[tokio::test]
async fn healthz_reports_version() {
    let (status, _, json) = send(app(constant_model(0.3)), Request::get("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["status"], "ok");
    assert_eq!(json["model_version"], "const");
}

#[tokio::test]
async fn model_info_describes_the_network() {
    let model = reference_model(32, 1);
    let total = model.network().param_count();
    let (status, _, json) = send(app(model), Request::get("/model/info").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["input_shape"], serde_json::json!([32, 32, 3]));
    assert_eq!(json["class_names"], serde_json::json!(["Ae. aegypti", "Ae. albopictus"]));
    assert_eq!(json["threshold"], 0.5);
    assert_eq!(json["total_params"], total);
    assert_eq!(json["layers"].as_array().unwrap().len(), 18);
    assert!(json["summary"].as_str().unwrap().contains(&format!("total parameters: {total}")));
    assert_eq!(json["preprocessing"]["zca"], false);
}

#[tokio::test]
async fn classify_matches_the_library_call() {
    let model = reference_model(32, 2);
    let img = png(50, 40, 1);
    let direct = classify(&model, &img).unwrap();
    let (status, _, json) = send(app(model), post_raw(img, "image/png")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["score"].as_f64().unwrap(), direct.score);
    assert_eq!(json["label"], direct.label);
    assert_eq!(json["threshold"], 0.5);
    assert_eq!(json["model_version"], "test-2");
    assert!(json["latency_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(json["warnings"], serde_json::json!([]));
    let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["label", "latency_ms", "model_version", "score", "threshold", "warnings"]);
}

#[tokio::test]
async fn boundary_score_is_albopictus() {
    let (status, _, json) = send(app(constant_model(0.5)), post_raw(png(4, 4, 0), "image/png")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["score"], 0.5);
    assert_eq!(json["label"], "Ae. albopictus");
}

#[tokio::test]
async fn text_upload_is_415() {
    let (status, _, json) = send(app(constant_model(0.3)), post_raw(b"just some text".to_vec(), "text/plain")).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(json["error"]["code"], "unsupported_media_type");
    assert!(json["error"]["message"].as_str().is_some());
}

#[tokio::test]
async fn truncated_png_is_400() {
    let mut img = png(20, 20, 3);
    img.truncate(60);
    let (status, _, json) = send(app(constant_model(0.3)), post_raw(img, "image/png")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json["error"]["code"], "invalid_image");
}

#[tokio::test]
async fn empty_body_is_400() {
    let (status, _, json) = send(app(constant_model(0.3)), post_raw(Vec::new(), "image/png")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(json["error"]["code"], "empty_body");
}

#[tokio::test]
async fn oversized_uploads_are_413() {
    let config = ServiceConfig {
        max_upload_bytes: 1024,
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(constant_model(0.3)), config);
    let big = vec![0x89u8; 4096];

    let (status, _, json) = send(app.clone(), post_raw(big.clone(), "image/png")).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(json["error"]["code"], "payload_too_large");

    // no Content-Length: streamed body still hits the cap
    let req = Request::post("/classify").body(chunked(big.clone())).unwrap();
    let (status, _, _) = send(app.clone(), req).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let (status, _, json) = send(app, multipart(&[("image", Some("a.png"), &big)])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(json["error"]["code"], "payload_too_large");
}

fn chunked(bytes: Vec<u8>) -> Body {
    let chunks: Vec<Result<Vec<u8>, std::io::Error>> = bytes.chunks(512).map(|c| Ok(c.to_vec())).collect();
    Body::from_stream(futures_util::stream::iter(chunks))
}

#[tokio::test]
async fn default_cap_is_ten_mebibytes() {
    assert_eq!(aedes_service::DEFAULT_MAX_UPLOAD_BYTES, 10 * 1024 * 1024);
    assert_eq!(aedes_service::DEFAULT_REQUEST_TIMEOUT, Duration::from_secs(30));
    let app = app(constant_model(0.3));
    let just_over = vec![0u8; aedes_service::DEFAULT_MAX_UPLOAD_BYTES + 1];
    let (status, _, _) = send(app, post_raw(just_over, "image/png")).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn multipart_upload_picks_the_image_field() {
    let model = reference_model(32, 4);
    let img = png(32, 32, 9);
    let direct = classify(&model, &img).unwrap().score;
    let app = app(model);

    let (status, _, json) = send(app.clone(), multipart(&[("note", None, b"hi"), ("image", Some("x.png"), &img)])).await;
    assert_eq!(status, StatusCode::OK, "{json}");
    assert_eq!(json["score"].as_f64().unwrap(), direct);

    // any field carrying a filename counts as the upload
    let (status, _, json) = send(app.clone(), multipart(&[("upload", Some("x.png"), &img)])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json["score"].as_f64().unwrap(), direct);

    let (status, _, json) = send(app, multipart(&[("image", Some("x.txt"), b"plain words")])).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(json["error"]["code"], "unsupported_media_type");
}

#[tokio::test]
async fn unknown_route_is_json_404() {
    let (status, _, json) = send(app(constant_model(0.3)), Request::get("/nope").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(json["error"]["code"], "not_found");
}

#[tokio::test]
async fn cors_headers_follow_policy() {
    let origin = "http://localhost:5173";
    let preflight = || {
        Request::options("/classify")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
            .body(Body::empty())
            .unwrap()
    };

    let (_, headers, _) = send(app(constant_model(0.3)), preflight()).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
    assert!(headers[header::ACCESS_CONTROL_ALLOW_METHODS].to_str().unwrap().contains("POST"));

    let listed = ServiceConfig {
        cors: CorsPolicy::parse(origin),
        ..ServiceConfig::default()
    };
    let (_, headers, _) = send(router(Arc::new(constant_model(0.3)), listed.clone()), preflight()).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], origin);

    let other = Request::get("/healthz")
        .header(header::ORIGIN, "http://evil.test")
        .body(Body::empty())
        .unwrap();
    let (status, headers, _) = send(router(Arc::new(constant_model(0.3)), listed), other).await;
    assert_eq!(status, StatusCode::OK);
    assert!(headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());

    let off = ServiceConfig {
        cors: CorsPolicy::Disabled,
        ..ServiceConfig::default()
    };
    let (_, headers, _) = send(router(Arc::new(constant_model(0.3)), off), preflight()).await;
    assert!(headers.get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn parallel_identical_requests_agree() {
    let app = app(reference_model(48, 5));
    let img = png(64, 64, 2);
    let mut tasks = tokio::task::JoinSet::new();
    for _ in 0..12 {
        let app = app.clone();
        let img = img.clone();
        tasks.spawn(async move { send(app, post_raw(img, "image/png")).await });
    }
    let mut scores = Vec::new();
    while let Some(r) = tasks.join_next().await {
        let (status, _, json) = r.unwrap();
        assert_eq!(status, StatusCode::OK);
        scores.push(json["score"].as_f64().unwrap());
    }
    assert_eq!(scores.len(), 12);
    assert!(scores.iter().all(|&s| s == scores[0]), "{scores:?}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn single_worker_mode_serializes_but_answers_all() {
    let config = ServiceConfig {
        max_concurrent_inferences: Some(1),
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(reference_model(32, 6)), config);
    let img = png(32, 32, 5);
    let mut tasks = tokio::task::JoinSet::new();
    for _ in 0..6 {
        let app = app.clone();
        let img = img.clone();
        tasks.spawn(async move { send(app, post_raw(img, "image/png")).await.2["score"].as_f64().unwrap() });
    }
    let scores: Vec<f64> = tasks.join_all().await;
    assert!(scores.iter().all(|&s| s == scores[0]));
}

#[tokio::test]
async fn slow_inference_times_out_with_408() {
    let config = ServiceConfig {
        request_timeout: Duration::from_nanos(1),
        ..ServiceConfig::default()
    };
    let app = router(Arc::new(reference_model(128, 7)), config);
    let (status, _, json) = send(app, post_raw(png(128, 128, 0), "image/png")).await;
    assert_eq!(status, StatusCode::REQUEST_TIMEOUT);
    assert_eq!(json["error"]["code"], "timeout");
}
