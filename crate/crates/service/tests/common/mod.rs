#![allow(dead_code)]

use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use declutter_core::segmentation::{PlantedShape, SegmenterBackend, SyntheticMode};
use declutter_core::ImageTensor;
use declutter_service::{router, AppState, Service, ServiceConfig};
use http_body_util::BodyExt;
use tower::ServiceExt;

pub const SIDE: usize = 64;

pub fn planted(shapes: Vec<PlantedShape>) -> SegmenterBackend {
    SegmenterBackend::Synthetic(SyntheticMode::Planted { shapes })
}

pub fn shape(label: u32, top: usize, left: usize, height: usize, width: usize) -> PlantedShape {
    PlantedShape { label, top, left, height, width }
}

/// The two-element scene: a flat red block and a noisy patch.
pub fn two_element_backend() -> SegmenterBackend {
    planted(vec![shape(1, 8, 8, 16, 16), shape(92, 36, 30, 20, 24)])
}

pub fn scene_png() -> Vec<u8> {
    ImageTensor::from_fn(SIDE, SIDE, |r, c, ch| {
        if (8..24).contains(&r) && (8..24).contains(&c) {
            [0.9, 0.1, 0.1][ch]
        } else if (36..56).contains(&r) && (30..54).contains(&c) {
            ((r * 31 + c * 17 + ch * 7) % 11) as f32 / 10.0
        } else {
            0.3 + 0.4 * (r + c) as f32 / (2 * SIDE) as f32
        }
    })
    .unwrap()
    .encode_png()
    .unwrap()
}

pub fn config(store: &Path, segmentation: SegmenterBackend) -> ServiceConfig {
    ServiceConfig { store_path: store.to_path_buf(), segmentation, ..Default::default() }
}

pub fn app(config: &ServiceConfig) -> Router {
    router(AppState::new(Service::from_config(config).unwrap()))
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn send(app: &Router, request: Request<Body>) -> Reply {
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let content_type = response
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_owned());
    let body = response.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, content_type, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(app: &Router, uri: &str, body: serde_json::Value) -> Reply {
    let request = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, request).await
}

pub async fn post_empty(app: &Router, uri: &str) -> Reply {
    send(app, Request::post(uri).body(Body::empty()).unwrap()).await
}

pub async fn upload(app: &Router, bytes: &[u8]) -> Reply {
    let boundary = "declutter-test-boundary";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"photo.png\"\r\nContent-Type: image/png\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let request = Request::post("/v1/sessions")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    send(app, request).await
}
