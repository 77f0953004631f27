//! Service operations shared by the HTTP routes and the command line. Each
//! one validates its input and delegates to a single core operation.

use std::collections::BTreeMap;
use std::sync::Arc;

use dvspace::codec::{DvStreamReader, DvStreamWriter};
use dvspace::decision::{
    evaluate_variants_snapshot, suggest_dimensions_snapshot, suggest_intervals_snapshot, weights_from_intervals,
    Interval, IntervalSpec, IntervalView, Variant, VariantOutcome, WeightPlan,
};
use dvspace::federation::{coordinate, peer_answer, FederatedRequest, PeerResponse, PeerTransport, PooledStatistics};
use dvspace::model::{dv_from_json, dv_to_json, information_content, ContentHash, DefinitionSource};
use dvspace::registry::{PublishOutcome, Published};
use dvspace::search::{
    dimension_usages, group_stats_snapshot, search_snapshot, DimConstraint, GroupFilter, GroupStatistics, Metric,
    SearchQuery,
};
use dvspace::store::{SpaceInfo, Store};
use dvspace::{DomainDefinition, DomainVector, Execution, GlobalDimensionId, UlRef};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::peer::HttpPeer;

pub type Result<T> = std::result::Result<T, ApiError>;

pub struct Service {
    pub store: Arc<Store>,
    pub config: ServiceConfig,
    pub peers: Vec<Arc<dyn PeerTransport>>,
    pub exec: Execution,
}

/// A space named by an API id, plus the version the id pins, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceRef {
    pub ul: UlRef,
    pub version: Option<u64>,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBody {
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub weights: BTreeMap<usize, f64>,
    #[serde(default)]
    pub max_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchHit {
    pub record_id: u64,
    pub distance: f64,
    pub values: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResponse {
    pub space: String,
    pub local_index: u64,
    pub metric: Metric,
    pub k: usize,
    pub hits: Vec<SearchHit>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsBody {
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub weights: BTreeMap<usize, f64>,
    #[serde(default)]
    pub max_distance: Option<f64>,
    pub stat_dims: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestDimensionsBody {
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuggestedDimension {
    pub dim: usize,
    pub keyword: String,
    pub present_count: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Chosen {
    pub dim: usize,
    pub x: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestIntervalsBody {
    pub values: Vec<Chosen>,
    #[serde(default)]
    pub factors: BTreeMap<usize, f64>,
    /// Range constraints selecting the current group.
    #[serde(default)]
    pub group: Vec<DimConstraint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuggestIntervalsResponse {
    pub intervals: Vec<IntervalView>,
    pub weights: WeightPlan,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateBody {
    #[serde(default)]
    pub preconditions: Vec<Interval>,
    pub variants: Vec<Variant>,
    pub result_dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateResponse {
    pub variants: Vec<VariantOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UsageEntry {
    pub space: String,
    pub local_index: u64,
    pub slot: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedSearchBody {
    /// Space id or UL text.
    pub space: String,
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub weights: BTreeMap<usize, f64>,
    #[serde(default)]
    pub max_distance: Option<f64>,
    pub stat_dims: Vec<usize>,
    #[serde(default)]
    pub k_min: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FederatedSearchResponse {
    pub request_id: String,
    pub space: String,
    pub k_min: u64,
    #[serde(flatten)]
    pub pooled: PooledStatistics,
}

#[derive(Debug, Clone, Serialize)]
pub struct InsertReport {
    pub inserted: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_id: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PublishResponse {
    pub ul: String,
    pub version: u64,
    pub content_hash: ContentHash,
    pub local_index: u64,
    pub created: bool,
}

impl From<PublishOutcome> for PublishResponse {
    fn from(o: PublishOutcome) -> Self {
        PublishResponse {
            ul: o.ul.to_string(),
            version: o.version,
            content_hash: o.content_hash,
            local_index: o.local_index,
            created: o.created,
        }
    }
}

fn is_hash(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit())
}

impl Service {
    pub fn new(store: Arc<Store>, config: ServiceConfig) -> Self {
        Service { store, config, peers: Vec::new(), exec: Execution::default() }
    }

    /// Opens the configured data directory and connects the configured peers.
    pub fn from_config(config: ServiceConfig) -> anyhow::Result<Self> {
        let store = Arc::new(Store::open(&config.data_dir)?);
        let peers =
            config.peers.iter().map(|p| Arc::new(HttpPeer::new(&p.name, &p.url)) as Arc<dyn PeerTransport>).collect();
        Ok(Service { peers, ..Service::new(store, config) })
    }

    /// Short index, content hash, or UL text.
    pub fn resolve_id(&self, id: &str) -> Result<SpaceRef> {
        let id = id.trim();
        if !id.is_empty() && id.bytes().all(|b| b.is_ascii_digit()) {
            let index: u64 = id.parse().map_err(|_| ApiError::not_found(format!("no space with index {id}")))?;
            let ul = self.store.registry().canonical_ul(&UlRef::LocalTableIndex(index), None);
            return ul.map(|ul| SpaceRef { ul, version: None }).map_err(|_| ApiError::not_found(format!("no space with index {id}")));
        }
        if is_hash(id) {
            let hash: ContentHash = id.to_ascii_lowercase().parse().map_err(ApiError::bad_request)?;
            let found = self.store.registry().by_hash(&hash);
            return found
                .map(|(ul, v)| SpaceRef { ul, version: Some(v) })
                .ok_or_else(|| ApiError::not_found(format!("no definition with content hash {id}")));
        }
        let ul: UlRef = id.parse().map_err(|e| ApiError::bad_request(format!("bad space id {id:?}: {e}")))?;
        if !ul.is_global() {
            return Err(ApiError::bad_request(format!("bad space id {id:?}")));
        }
        let p = self.store.resolve(&ul, None, None)?;
        Ok(SpaceRef { ul: p.def.ul.clone(), version: None })
    }

    fn published(&self, space: &SpaceRef, version: Option<u64>) -> Result<Arc<Published>> {
        Ok(self.store.resolve(&space.ul, version.or(space.version), None)?)
    }

    /// Publishes under `id`: an id that names a space must name the
    /// definition's own space; `new` or the next free index register a new
    /// space.
    pub fn publish(&self, id: &str, def: &DomainDefinition) -> Result<PublishResponse> {
        let next = self.store.registry().local_table().len().to_string();
        if id != "new" && id != next {
            let target = self.resolve_id(id)?;
            if target.ul != def.ul {
                return Err(ApiError::bad_request(format!("{id} names {}, the definition is for {}", target.ul, def.ul)));
            }
        }
        Ok(self.store.publish_definition(def)?.into())
    }

    /// Registry check without publishing.
    pub fn validate(&self, def: &DomainDefinition) -> Result<Value> {
        let prepared = self.store.registry().prepare(def).map_err(dvspace::store::StoreError::from)?;
        Ok(match prepared {
            dvspace::registry::Prepared::Existing(o) => json!({"valid": true, "existing": PublishResponse::from(o)}),
            dvspace::registry::Prepared::New(p) => json!({
                "valid": true,
                "version": p.def.version,
                "content_hash": p.hash,
                "dimensions": p.schema.len(),
            }),
        })
    }

    pub fn list_spaces(&self) -> Vec<SpaceInfo> {
        self.store.space_infos()
    }

    pub fn space_detail(&self, id: &str, version: Option<u64>) -> Result<Value> {
        let space = self.resolve_id(id)?;
        let p = self.published(&space, version)?;
        let (bits, index, versions) = {
            let reg = self.store.registry();
            let bits = information_content(&p.def, &*reg as &dyn DefinitionSource).ok().and_then(|b| b.bits());
            (bits, reg.local_index(&p.def.ul), reg.versions(&p.def.ul).len())
        };
        let dims: Vec<Value> = p
            .schema
            .dims
            .iter()
            .enumerate()
            .map(|(slot, fd)| json!({"slot": slot, "gid": fd.gid.to_string(), "path": fd.path, "definition": fd.def}))
            .collect();
        Ok(json!({
            "local_index": index,
            "ul": p.def.ul.to_string(),
            "version": p.def.version,
            "versions": versions,
            "content_hash": p.hash,
            "records": self.store.record_count(&p.def.ul)?,
            "information_bits": bits,
            "definition": p.def.as_ref(),
            "dimensions": dims,
        }))
    }

    fn same_space(&self, space: &SpaceRef, dv: &DomainVector, i: usize, previous: Option<&UlRef>) -> Result<UlRef> {
        let ul = self
            .store
            .registry()
            .canonical_ul(&dv.space, previous)
            .map_err(|e| ApiError::bad_request(format!("vector {i}: {e}")))?;
        if ul != space.ul {
            return Err(ApiError::bad_request(format!("vector {i} belongs to {ul}, not {}", space.ul)));
        }
        Ok(ul)
    }

    fn insert(&self, dvs: Vec<DomainVector>, version: Option<u64>) -> Result<InsertReport> {
        let ids = self.store.insert_dvs(dvs, version)?;
        Ok(InsertReport { inserted: ids.len(), first_id: ids.first().copied(), last_id: ids.last().copied() })
    }

    /// JSON array of vectors; each is a value array or `{space, values}`.
    pub fn insert_json(&self, id: &str, version: Option<u64>, body: &Value) -> Result<InsertReport> {
        let space = self.resolve_id(id)?;
        let items = body.as_array().ok_or_else(|| ApiError::bad_request("expected a JSON array of vectors"))?;
        let version = version.or(space.version);
        let mut dvs = Vec::with_capacity(items.len());
        let mut previous = None;
        for (i, item) in items.iter().enumerate() {
            let slots = match item {
                Value::Array(a) => a.len(),
                other => other.get("values").and_then(Value::as_array).map_or(0, Vec::len),
            };
            let p = match version {
                Some(_) => self.published(&space, version)?,
                None => self.version_with_slots(&space, slots)?,
            };
            let mut dv = dv_from_json(item, &p.schema).map_err(|e| ApiError::bad_request(format!("vector {i}: {e}")))?;
            let ul = self.same_space(&space, &dv, i, previous.as_ref())?;
            dv.space = ul.clone();
            previous = Some(ul);
            dvs.push(dv);
        }
        self.insert(dvs, version)
    }

    fn version_with_slots(&self, space: &SpaceRef, slots: usize) -> Result<Arc<Published>> {
        let reg = self.store.registry();
        reg.versions(&space.ul).iter().rev().find(|p| p.schema.len() == slots).cloned().ok_or_else(|| {
            ApiError::bad_request(format!("no version of {} has {slots} slots", space.ul))
        })
    }

    /// Binary stream of vectors decoded with the given version (default
    /// latest).
    pub fn insert_binary(&self, id: &str, version: Option<u64>, body: &[u8]) -> Result<InsertReport> {
        let space = self.resolve_id(id)?;
        let p = self.published(&space, version)?;
        let mut r = DvStreamReader::new(body);
        let mut dvs = Vec::new();
        let mut previous = None;
        while !r.is_empty() {
            let i = dvs.len();
            let mut dv = r.next_dv(&p.schema).map_err(|e| ApiError::bad_request(format!("vector {i}: {e}")))?;
            let ul = self.same_space(&space, &dv, i, previous.as_ref())?;
            dv.space = ul.clone();
            previous = Some(ul);
            dvs.push(dv);
        }
        self.insert(dvs, Some(p.def.version))
    }

    /// Encodes JSON vectors as a binary stream.
    pub fn encode(&self, id: &str, version: Option<u64>, body: &Value) -> Result<Vec<u8>> {
        let space = self.resolve_id(id)?;
        let p = self.published(&space, version)?;
        let items = body.as_array().ok_or_else(|| ApiError::bad_request("expected a JSON array of vectors"))?;
        let mut w = DvStreamWriter::new();
        for (i, item) in items.iter().enumerate() {
            let dv = dv_from_json(item, &p.schema).map_err(|e| ApiError::bad_request(format!("vector {i}: {e}")))?;
            w.push(&dv, &p.schema).map_err(|e| ApiError::bad_request(format!("vector {i}: {e}")))?;
        }
        Ok(w.into_bytes())
    }

    pub fn decode(&self, id: &str, version: Option<u64>, body: &[u8]) -> Result<Value> {
        let space = self.resolve_id(id)?;
        let p = self.published(&space, version)?;
        let mut r = DvStreamReader::new(body);
        let mut out = Vec::new();
        while !r.is_empty() {
            let dv = r.next_dv(&p.schema).map_err(|e| ApiError::bad_request(format!("vector {}: {e}", out.len())))?;
            out.push(dv_to_json(&dv, &p.schema));
        }
        Ok(Value::Array(out))
    }

    pub fn search(&self, id: &str, body: SearchBody) -> Result<SearchResponse> {
        let space = self.resolve_id(id)?;
        if body.k > self.config.max_k {
            return Err(ApiError::bad_request(format!("k = {} exceeds the limit of {}", body.k, self.config.max_k)));
        }
        let query = SearchQuery {
            space: space.ul.clone(),
            constraints: body.constraints,
            k: body.k,
            metric: body.metric,
            weights: body.weights,
            max_distance: body.max_distance,
        };
        let snap = self.store.snapshot(&space.ul)?;
        let result = search_snapshot(&query, &snap, self.exec)?;
        let hits = result
            .hits
            .into_iter()
            .map(|h| SearchHit { record_id: h.record_id, distance: h.distance, values: dv_to_json(&h.dv, snap.schema())["values"].take() })
            .collect();
        Ok(SearchResponse {
            space: space.ul.to_string(),
            local_index: snap.local_index,
            metric: query.metric,
            k: query.k,
            hits,
        })
    }

    pub fn stats(&self, id: &str, body: StatsBody) -> Result<GroupStatistics> {
        let space = self.resolve_id(id)?;
        let filter =
            GroupFilter { constraints: body.constraints, metric: body.metric, weights: body.weights, max_distance: body.max_distance };
        let snap = self.store.snapshot(&space.ul)?;
        Ok(group_stats_snapshot(&filter, &body.stat_dims, &snap, self.exec)?)
    }

    pub fn suggest_dimensions(&self, id: &str, body: SuggestDimensionsBody) -> Result<Vec<SuggestedDimension>> {
        let space = self.resolve_id(id)?;
        let snap = self.store.snapshot(&space.ul)?;
        let ranked = suggest_dimensions_snapshot(&body.constraints, &snap, self.exec)?;
        Ok(ranked
            .into_iter()
            .map(|f| SuggestedDimension {
                dim: f.dim,
                keyword: snap.schema().dim(f.dim).map(|d| d.keyword.clone()).unwrap_or_default(),
                present_count: f.present_count,
            })
            .collect())
    }

    pub fn suggest_intervals(&self, id: &str, body: SuggestIntervalsBody) -> Result<SuggestIntervalsResponse> {
        let space = self.resolve_id(id)?;
        if body.group.iter().any(|c| c.sim.is_some()) {
            return Err(ApiError::bad_request("group constraints take min/max bounds only"));
        }
        let snap = self.store.snapshot(&space.ul)?;
        let xs: Vec<(usize, f64)> = body.values.iter().map(|c| (c.dim, c.x)).collect();
        let spec = suggest_intervals_snapshot(&xs, &body.factors, &GroupFilter::ranges(body.group), &snap, self.exec)?;
        Ok(SuggestIntervalsResponse { weights: weights_from_intervals(&spec), intervals: spec.views() })
    }

    pub fn evaluate_variants(&self, id: &str, body: EvaluateBody) -> Result<EvaluateResponse> {
        let space = self.resolve_id(id)?;
        let snap = self.store.snapshot(&space.ul)?;
        let variants =
            evaluate_variants_snapshot(&IntervalSpec(body.preconditions), &body.variants, &body.result_dims, &snap, self.exec)?;
        Ok(EvaluateResponse { variants })
    }

    /// `gid` is `<space id or UL>#<index>`.
    pub fn usages(&self, gid: &str) -> Result<Vec<UsageEntry>> {
        let (space, index) =
            gid.rsplit_once('#').ok_or_else(|| ApiError::bad_request(format!("expected <space>#<index>, got {gid:?}")))?;
        let origin_index: u32 = index.parse().map_err(|_| ApiError::bad_request(format!("bad dimension index {index:?}")))?;
        let origin_space = self.resolve_id(space)?.ul;
        let gid = GlobalDimensionId { origin_space, origin_index };
        let reg = self.store.registry();
        Ok(dimension_usages(&gid, &reg)
            .into_iter()
            .map(|u| UsageEntry { local_index: reg.local_index(&u.space).unwrap_or_default(), space: u.space.to_string(), slot: u.slot })
            .collect())
    }

    pub fn federated_request(&self, body: FederatedSearchBody) -> Result<FederatedRequest> {
        let space = match self.resolve_id(&body.space) {
            Ok(s) => s.ul,
            Err(_) => body
                .space
                .parse::<UlRef>()
                .ok()
                .filter(UlRef::is_global)
                .ok_or_else(|| ApiError::bad_request(format!("{:?} is neither a known space nor a global UL", body.space)))?,
        };
        let k_min = body.k_min.unwrap_or(self.config.k_min).max(self.config.k_min);
        let mut req = FederatedRequest::new(new_request_id(), space, body.stat_dims, k_min);
        req.constraints = body.constraints;
        req.metric = body.metric;
        req.weights = body.weights;
        req.max_distance = body.max_distance;
        req.check()?;
        Ok(req)
    }

    /// Coordinator side: ask every configured peer and pool the answers.
    pub fn federated_search(&self, body: FederatedSearchBody) -> Result<FederatedSearchResponse> {
        let req = self.federated_request(body)?;
        let pooled = coordinate(&req, &self.peers, self.config.timeout)?;
        Ok(FederatedSearchResponse { request_id: req.request_id, space: req.space.to_string(), k_min: req.k_min, pooled })
    }

    /// Peer side. Malformed requests are answered with an error outcome.
    pub fn answer(&self, body: &Value) -> Value {
        let request_id = body.get("request_id").and_then(Value::as_str).unwrap_or_default().to_owned();
        match serde_json::from_value::<FederatedRequest>(body.clone()) {
            Ok(req) => peer_answer(&req, &self.store, self.config.k_min).to_json(),
            Err(e) => PeerResponse { request_id, outcome: dvspace::federation::Outcome::Error(e.to_string()) }.to_json(),
        }
    }
}

fn new_request_id() -> String {
    uuid::Uuid::new_v4().to_string()
}
