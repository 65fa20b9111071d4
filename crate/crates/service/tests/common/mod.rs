#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use medreview_service::{http, Hub, HubConfig};
use serde_json::Value;
use tower::ServiceExt;

pub const PHARMACIST: &str = "pharmacist-token";
pub const GP: &str = "gp-token";
pub const OBSERVER: &str = "observer-token";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixtures_dir().join(name)).unwrap()
}

/// Hub over the shipped fixtures with a counting clock and the demo patient loaded.
pub fn hub() -> Arc<Hub> {
    let tick = AtomicU64::new(0);
    let hub = Hub::from_config(&HubConfig::in_dir(fixtures_dir()))
        .unwrap()
        .with_clock(move || tick.fetch_add(1, Ordering::SeqCst) + 1);
    hub.import(&fixture("demo_patient.json")).unwrap();
    Arc::new(hub)
}

pub struct Client {
    pub app: Router,
    pub token: &'static str,
}

pub struct Reply {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or(Value::Null)
    }
}

impl Client {
    pub fn new(hub: &Arc<Hub>, token: &'static str) -> Self {
        Client {
            app: http::router(hub.clone()),
            token,
        }
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> Reply {
        let mut req = Request::builder()
            .method(method)
            .uri(uri)
            .header("authorization", format!("Bearer {}", self.token));
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self
            .app
            .clone()
            .oneshot(req.body(body).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        Reply { status, bytes }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.call("GET", uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Reply {
        self.call("POST", uri, Some(body)).await
    }
}
