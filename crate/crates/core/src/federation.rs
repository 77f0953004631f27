//! Federated statistics. A coordinator sends a [`FederatedRequest`] to every
//! peer; each peer answers with k-anonymized group statistics or nothing; the
//! coordinator pools the answers weighted by group size.
//!
//! Wire bodies are JSON with every number written as a decimal string:
//!
//! ```text
//! request   {"request_id", "space", "constraints", "stat_dims", "k_min"}
//! response  {"request_id", "outcome": "stats"|"suppressed"|"error",
//!            "stats"?: {"n", "dims": {"<dim>": {"count","mean","std"} | null}},
//!            "error"?: "<text>"}
//! ```
//!
//! A dimension whose present count is below `k_min` is sent as `null`.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::codec::UlRef;
use crate::exec::{compensated_sum, Execution};
use crate::search::{group_stats_snapshot, DimConstraint, GroupFilter, Metric};
use crate::store::Store;

#[derive(Debug, Error, PartialEq)]
pub enum FederationError {
    #[error("no peer contributed statistics")]
    NoContributingPeers,
    #[error("invalid federated request: {0}")]
    InvalidRequest(String),
    #[error("malformed peer message: {0}")]
    Wire(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedRequest {
    pub request_id: String,
    #[serde(with = "ul_text")]
    pub space: UlRef,
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
    #[serde(default, skip_serializing_if = "is_default_metric")]
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<f64>,
    pub stat_dims: Vec<usize>,
    #[serde(with = "count_text")]
    pub k_min: u64,
}

fn is_default_metric(m: &Metric) -> bool {
    *m == Metric::default()
}

mod ul_text {
    use super::UlRef;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ul: &UlRef, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(ul)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UlRef, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(D::Error::custom)
    }
}

/// Counts travel as decimal strings; bare integers are accepted as well.
mod count_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(n)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) => s.parse().map_err(D::Error::custom),
            serde_json::Value::Number(n) => n.as_u64().ok_or_else(|| D::Error::custom("expected a count")),
            other => Err(D::Error::custom(format!("expected a count, got {other}"))),
        }
    }
}

impl FederatedRequest {
    pub fn new(request_id: impl Into<String>, space: UlRef, stat_dims: Vec<usize>, k_min: u64) -> Self {
        FederatedRequest {
            request_id: request_id.into(),
            space,
            constraints: Vec::new(),
            metric: Metric::default(),
            weights: BTreeMap::new(),
            max_distance: None,
            stat_dims,
            k_min,
        }
    }

    pub fn with(mut self, c: DimConstraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn check(&self) -> Result<(), FederationError> {
        if self.k_min == 0 {
            return Err(FederationError::InvalidRequest("k_min must be at least 1".into()));
        }
        if self.stat_dims.is_empty() {
            return Err(FederationError::InvalidRequest("stat_dims must not be empty".into()));
        }
        if !self.space.is_global() {
            return Err(FederationError::InvalidRequest(format!("{} is not a global locator", self.space)));
        }
        Ok(())
    }

    fn filter(&self) -> GroupFilter {
        GroupFilter {
            constraints: self.constraints.clone(),
            metric: self.metric,
            weights: self.weights.clone(),
            max_distance: self.max_distance,
        }
    }
}

/// Moments of one dimension as released by a peer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerDim {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerStats {
    pub n: u64,
    /// `None` marks a dimension withheld by the floor.
    pub dims: BTreeMap<usize, Option<PeerDim>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Stats(PeerStats),
    Suppressed,
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerResponse {
    pub request_id: String,
    pub outcome: Outcome,
}

fn num(x: f64) -> Value {
    Value::String(x.to_string())
}

fn parse_num<T: std::str::FromStr>(v: &Value, what: &str) -> Result<T, FederationError> {
    v.as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FederationError::Wire(format!("{what} must be a decimal string")))
}

impl PeerResponse {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("request_id".into(), Value::String(self.request_id.clone()));
        match &self.outcome {
            Outcome::Stats(s) => {
                m.insert("outcome".into(), "stats".into());
                let dims: Map<String, Value> = s
                    .dims
                    .iter()
                    .map(|(d, v)| {
                        let body = match v {
                            Some(p) => json!({"count": p.count.to_string(), "mean": num(p.mean), "std": num(p.std)}),
                            None => Value::Null,
                        };
                        (d.to_string(), body)
                    })
                    .collect();
                m.insert("stats".into(), json!({"n": s.n.to_string(), "dims": dims}));
            }
            Outcome::Suppressed => {
                m.insert("outcome".into(), "suppressed".into());
            }
            Outcome::Error(e) => {
                m.insert("outcome".into(), "error".into());
                m.insert("error".into(), Value::String(e.clone()));
            }
        }
        Value::Object(m)
    }

    pub fn from_json(v: &Value) -> Result<Self, FederationError> {
        let request_id = v
            .get("request_id")
            .and_then(Value::as_str)
            .ok_or_else(|| FederationError::Wire("request_id missing".into()))?
            .to_owned();
        let outcome = match v.get("outcome").and_then(Value::as_str) {
            Some("suppressed") => Outcome::Suppressed,
            Some("error") => Outcome::Error(v.get("error").and_then(Value::as_str).unwrap_or_default().to_owned()),
            Some("stats") => {
                let s = v.get("stats").ok_or_else(|| FederationError::Wire("stats missing".into()))?;
                let n = parse_num(&s["n"], "n")?;
                let mut dims = BTreeMap::new();
                let obj = s
                    .get("dims")
                    .and_then(Value::as_object)
                    .ok_or_else(|| FederationError::Wire("dims missing".into()))?;
                for (k, d) in obj {
                    let dim: usize = k.parse().map_err(|_| FederationError::Wire(format!("bad dimension key {k}")))?;
                    let entry = if d.is_null() {
                        None
                    } else {
                        Some(PeerDim {
                            count: parse_num(&d["count"], "count")?,
                            mean: parse_num(&d["mean"], "mean")?,
                            std: parse_num(&d["std"], "std")?,
                        })
                    };
                    dims.insert(dim, entry);
                }
                Outcome::Stats(PeerStats { n, dims })
            }
            other => return Err(FederationError::Wire(format!("unknown outcome {other:?}"))),
        };
        Ok(PeerResponse { request_id, outcome })
    }
}

/// Answers a request from the local store. `floor` is the peer's own
/// minimum; the larger of it and the request's `k_min` applies.
pub fn peer_answer(request: &FederatedRequest, store: &Store, floor: u64) -> PeerResponse {
    let respond = |outcome| PeerResponse { request_id: request.request_id.clone(), outcome };
    if let Err(e) = request.check() {
        return respond(Outcome::Error(e.to_string()));
    }
    let k_min = request.k_min.max(floor);
    let stats = store
        .snapshot(&request.space)
        .map_err(|e| e.to_string())
        .and_then(|snap| {
            group_stats_snapshot(&request.filter(), &request.stat_dims, &snap, Execution::default())
                .map_err(|e| e.to_string())
        });
    let stats = match stats {
        Ok(s) => s,
        Err(e) => return respond(Outcome::Error(e)),
    };
    if stats.group_size < k_min {
        return respond(Outcome::Suppressed);
    }
    let dims = stats
        .dims
        .iter()
        .map(|d| {
            let released = match (d.mean, d.std) {
                (Some(mean), Some(std)) if d.present_count >= k_min => Some(PeerDim { count: d.present_count, mean, std }),
                _ => None,
            };
            (d.dim, released)
        })
        .collect();
    respond(Outcome::Stats(PeerStats { n: stats.group_size, dims }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledDim {
    pub dim: usize,
    pub count: u64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PooledStatistics {
    pub total_n: u64,
    pub dims: Vec<PooledDim>,
    pub contributing_peers: usize,
    pub suppressed_peers: usize,
    pub failed_peers: usize,
    pub unreachable_peers: usize,
}

impl PooledStatistics {
    pub fn dim(&self, dim: usize) -> Option<&PooledDim> {
        self.dims.iter().find(|d| d.dim == dim)
    }
}

/// Pools peer statistics. Per dimension, with counts `c_i`, means `m_i` and
/// population deviations `d_i`:
///
/// ```text
/// M   = sum c_i m_i / C
/// D^2 = sum c_i (d_i^2 + (m_i - M)^2) / C
/// ```
///
/// which equals the moment of the union. Inputs are sorted first, so the
/// result does not depend on response order.
pub fn pool(responses: &[PeerResponse]) -> Result<PooledStatistics, FederationError> {
    let mut out = PooledStatistics::default();
    let mut stats: Vec<&PeerStats> = Vec::new();
    for r in responses {
        match &r.outcome {
            Outcome::Stats(s) => stats.push(s),
            Outcome::Suppressed => out.suppressed_peers += 1,
            Outcome::Error(_) => out.failed_peers += 1,
        }
    }
    if stats.is_empty() {
        return Err(FederationError::NoContributingPeers);
    }
    out.contributing_peers = stats.len();
    out.total_n = stats.iter().map(|s| s.n).sum();

    let mut per_dim: BTreeMap<usize, Vec<PeerDim>> = BTreeMap::new();
    for s in &stats {
        for (d, v) in &s.dims {
            let entry = per_dim.entry(*d).or_default();
            if let Some(p) = v {
                entry.push(*p);
            }
        }
    }
    for (dim, mut parts) in per_dim {
        parts.retain(|p| p.count > 0);
        if parts.is_empty() {
            continue;
        }
        parts.sort_by(|a, b| {
            a.count.cmp(&b.count).then(a.mean.total_cmp(&b.mean)).then(a.std.total_cmp(&b.std))
        });
        let count: u64 = parts.iter().map(|p| p.count).sum();
        let c = count as f64;
        let mean = compensated_sum(parts.iter().map(|p| p.count as f64 * p.mean)) / c;
        let var = compensated_sum(parts.iter().map(|p| {
            let dm = p.mean - mean;
            p.count as f64 * (p.std * p.std + dm * dm)
        })) / c;
        out.dims.push(PooledDim { dim, count, mean, std: var.max(0.0).sqrt() });
    }
    Ok(out)
}

/// Request/response channel to one peer.
pub trait PeerTransport: Send + Sync {
    fn name(&self) -> String;
    fn answer(&self, request: &FederatedRequest, timeout: Duration) -> Result<PeerResponse, String>;
}

/// A peer in the same process.
pub struct LocalPeer {
    pub name: String,
    pub store: Arc<Store>,
    pub floor: u64,
}

impl PeerTransport for LocalPeer {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn answer(&self, request: &FederatedRequest, _timeout: Duration) -> Result<PeerResponse, String> {
        Ok(peer_answer(request, &self.store, self.floor))
    }
}

/// Asks all peers concurrently and pools what arrives before `timeout`.
/// Peers that fail to answer in time, fail at the transport level or echo a
/// different request id count as unreachable.
pub fn coordinate(
    request: &FederatedRequest,
    peers: &[Arc<dyn PeerTransport>],
    timeout: Duration,
) -> Result<PooledStatistics, FederationError> {
    request.check()?;
    let deadline = Instant::now() + timeout;
    let (tx, rx) = mpsc::channel();
    for (i, peer) in peers.iter().enumerate() {
        let tx = tx.clone();
        let peer = Arc::clone(peer);
        let req = request.clone();
        std::thread::spawn(move || {
            let _ = tx.send((i, peer.answer(&req, timeout)));
        });
    }
    drop(tx);
    let mut arrived: Vec<Option<PeerResponse>> = vec![None; peers.len()];
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        match rx.recv_timeout(left) {
            Ok((i, Ok(resp))) if resp.request_id == request.request_id => arrived[i] = Some(resp),
            Ok(_) => {}
            Err(_) => break,
        }
    }
    let unreachable = arrived.iter().filter(|a| a.is_none()).count();
    let responses: Vec<PeerResponse> = arrived.into_iter().flatten().collect();
    let mut pooled = pool(&responses)?;
    pooled.unreachable_peers = unreachable;
    Ok(pooled)
}
