#![allow(dead_code)]

use std::sync::Arc;

use dvspace::Store;
use dvspace_service::config::ServiceConfig;
use dvspace_service::{http, Service};
use serde_json::Value;

/// A live HTTP service on an ephemeral local port.
pub struct Server {
    pub base: String,
    pub svc: Arc<Service>,
    _rt: tokio::runtime::Runtime,
}

impl Server {
    pub fn start(store: Arc<Store>) -> Server {
        Self::start_with(Service::new(store, ServiceConfig::default()))
    }

    pub fn start_with(svc: Service) -> Server {
        let svc = Arc::new(svc);
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        rt.spawn(http::serve(listener, Arc::clone(&svc)));
        Server { base, svc, _rt: rt }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub fn get(&self, path: &str) -> (u16, String) {
        finish(ureq::get(&self.url(path)).call())
    }

    pub fn send(&self, method: &str, path: &str, body: &Value) -> (u16, Value) {
        let (status, text) = self.send_raw(method, path, "application/json", body.to_string().as_bytes());
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        self.send("POST", path, body)
    }

    pub fn send_raw(&self, method: &str, path: &str, content_type: &str, body: &[u8]) -> (u16, String) {
        finish(ureq::request(method, &self.url(path)).set("Content-Type", content_type).send_bytes(body))
    }
}

fn finish(r: Result<ureq::Response, ureq::Error>) -> (u16, String) {
    match r {
        Ok(resp) => (resp.status(), resp.into_string().unwrap()),
        Err(ureq::Error::Status(code, resp)) => (code, resp.into_string().unwrap()),
        Err(e) => panic!("transport error: {e}"),
    }
}
