#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use vizcritique::config::ClarifyConfig;
use vizcritique::pipeline::{Analyzer, Backends};
use vizcritique::synth::{generate, SynthSpec};
use vizcritique_service::{router, AppState, FsStore, ProjectService};

pub const TOKEN: &str = "secret-1";
pub const OTHER_TOKEN: &str = "secret-2";
pub const BOUNDARY: &str = "vizcritique-test-boundary";

pub struct Harness {
    pub dir: tempfile::TempDir,
    pub state: AppState,
    pub app: Router,
}

pub fn harness_with(backends: Backends, workers: usize) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open(dir.path()).unwrap();
    let analyzer = Analyzer::new(ClarifyConfig::default(), backends);
    let service = ProjectService::start(Arc::new(store), Arc::new(analyzer), workers).unwrap();
    let state = AppState {
        service: Arc::new(service),
        tokens: Arc::new(
            [
                (TOKEN.to_string(), "u1".to_string()),
                (OTHER_TOKEN.to_string(), "u2".to_string()),
            ]
            .into(),
        ),
    };
    let app = router(state.clone(), 8 * 1024 * 1024);
    Harness { dir, state, app }
}

pub fn harness() -> Harness {
    harness_with(Backends::stubs(), 2)
}

pub fn chart_png(w: u32, h: u32, seed: u64) -> Vec<u8> {
    generate(&SynthSpec::random(seed, w, h), seed).image.to_png_bytes()
}

pub fn multipart(file_name: &str, bytes: &[u8]) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"{file_name}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(bytes);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    body
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

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn send(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub fn get(uri: &str, token: &str) -> Request<Body> {
    Request::get(uri)
        .header("authorization", format!("Bearer {token}"))
        .body(Body::empty())
        .unwrap()
}

pub fn post_json(uri: &str, token: &str, body: &str) -> Request<Body> {
    Request::post(uri)
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

pub fn upload(project: &str, token: &str, file_name: &str, bytes: &[u8]) -> Request<Body> {
    Request::post(format!("/projects/{project}/revisions"))
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(file_name, bytes)))
        .unwrap()
}

pub async fn create_project(app: &Router, name: &str) -> String {
    let r = send(app, post_json("/projects", TOKEN, &format!("{{\"name\": \"{name}\"}}"))).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    r.json()["id"].as_str().unwrap().to_string()
}
