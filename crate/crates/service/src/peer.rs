//! HTTP transport to a peer's `/federated/answer` endpoint.

use std::sync::Arc;
use std::time::Duration;

use dvspace::federation::{FederatedRequest, PeerResponse, PeerTransport};
use parking_lot::Mutex;
use serde_json::Value;

/// One request/response exchange as it crossed the wire.
#[derive(Debug, Clone)]
pub struct WireRecord {
    pub peer: String,
    pub request: String,
    pub response: Option<String>,
}

pub type WireLog = Arc<Mutex<Vec<WireRecord>>>;

pub struct HttpPeer {
    name: String,
    url: String,
    log: Option<WireLog>,
}

impl HttpPeer {
    /// `base` is the peer's root URL, e.g. `http://10.0.0.5:8080`.
    pub fn new(name: impl Into<String>, base: &str) -> Self {
        HttpPeer { name: name.into(), url: format!("{}/federated/answer", base.trim_end_matches('/')), log: None }
    }

    pub fn with_log(mut self, log: WireLog) -> Self {
        self.log = Some(log);
        self
    }

    fn exchange(&self, body: &str, timeout: Duration) -> Result<String, String> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let resp = agent.post(&self.url).set("Content-Type", "application/json").send_string(body);
        let resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                return Err(format!("HTTP {code}: {text}"));
            }
            Err(e) => return Err(e.to_string()),
        };
        resp.into_string().map_err(|e| e.to_string())
    }
}

impl PeerTransport for HttpPeer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn answer(&self, request: &FederatedRequest, timeout: Duration) -> Result<PeerResponse, String> {
        let body = serde_json::to_string(request).map_err(|e| e.to_string())?;
        let raw = self.exchange(&body, timeout);
        if let Some(log) = &self.log {
            log.lock().push(WireRecord { peer: self.name.clone(), request: body, response: raw.as_ref().ok().cloned() });
        }
        let value: Value = serde_json::from_str(&raw?).map_err(|e| e.to_string())?;
        PeerResponse::from_json(&value).map_err(|e| e.to_string())
    }
}
