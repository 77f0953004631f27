//! Durable registry plus one append-only vector log per space.
//!
//! Layout of a data directory:
//!
//! ```text
//! definitions.log      every published definition version, in publish order
//! spaces/<index>.log   vector records of the space with that local index
//! ```
//!
//! Both files use the framed log format of [`log`]. In-memory indexes are
//! rebuilt by replaying the logs on open.

pub mod log;
mod transfer;

use std::collections::HashMap;
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::lock_api::ArcRwLockReadGuard;
use parking_lot::{Mutex, RawRwLock, RwLock, RwLockReadGuard};
use serde::Serialize;
use thiserror::Error;

use crate::codec::{read_dv, write_dv, write_uint, CodecError, Reader, UlRef};
use crate::model::{
    canonical_bytes, parse_canonical, validate_dv, ContentHash, DomainDefinition, DomainVector, ModelError, Schema,
    Violation, ViolationKind,
};
use crate::registry::{Prepared, PublishOutcome, Published, Registry, RegistryError};
use log::{LogFile, RECORD_DEFINITION, RECORD_DV};

pub use transfer::{decode_definitions, encode_definitions, DefinitionFetcher, StaticDirFetcher, EXPORT_MAGIC};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("same-as-before locator without context")]
    ContextMissing,
    #[error("validation failed: {}", join(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("append-only violation: {0}")]
    AppendOnlyViolation(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl From<RegistryError> for StoreError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::NotFound(s) => StoreError::NotFound(s),
            RegistryError::ContextMissing => StoreError::ContextMissing,
            RegistryError::ValidationFailed(v) => StoreError::ValidationFailed(v),
            RegistryError::AppendOnlyViolation(s) => StoreError::AppendOnlyViolation(s),
            RegistryError::Codec(c) => StoreError::Codec(c),
            RegistryError::Model(m) => StoreError::from(m),
        }
    }
}

impl From<ModelError> for StoreError {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::UnresolvedReference { .. } => ViolationKind::UnresolvedReference,
            ModelError::CycleDetected(_) => ViolationKind::CycleDetected,
        };
        StoreError::ValidationFailed(vec![Violation { kind, at: "components".into(), message: e.to_string() }])
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

/// One stored vector. `numbers` caches the numeric value of every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: u64,
    pub version: u64,
    pub dv: DomainVector,
    numbers: Box<[Option<f64>]>,
}

impl Record {
    pub fn new(id: u64, version: u64, dv: DomainVector) -> Self {
        let numbers = dv.values.iter().map(|v| v.as_ref().and_then(|s| s.as_f64())).collect();
        Record { id, version, dv, numbers }
    }

    /// Numeric value of a slot; `None` when absent, textual or beyond the
    /// slots of the record's version.
    #[inline]
    pub fn number(&self, slot: usize) -> Option<f64> {
        self.numbers.get(slot).copied().flatten()
    }

    pub fn is_present(&self, slot: usize) -> bool {
        matches!(self.dv.values.get(slot), Some(Some(_)))
    }
}

#[derive(Debug)]
struct Space {
    local_index: u64,
    log: Mutex<Option<LogFile>>,
    records: Arc<RwLock<Vec<Record>>>,
}

/// Read view of one space, stable for as long as it is held. Writers to the
/// same space wait until it is dropped.
pub struct Snapshot {
    pub published: Arc<Published>,
    pub local_index: u64,
    records: ArcRwLockReadGuard<RawRwLock, Vec<Record>>,
}

impl Snapshot {
    pub fn schema(&self) -> &Schema {
        &self.published.schema
    }

    pub fn ul(&self) -> &UlRef {
        &self.published.def.ul
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }
}

impl Deref for Snapshot {
    type Target = [Record];

    fn deref(&self) -> &[Record] {
        &self.records
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpaceInfo {
    pub local_index: u64,
    pub ul: UlRef,
    pub name: String,
    pub version: u64,
    pub content_hash: ContentHash,
    pub dimensions: usize,
    pub records: usize,
}

pub struct Store {
    dir: Option<PathBuf>,
    registry: RwLock<Registry>,
    def_log: Mutex<Option<LogFile>>,
    spaces: RwLock<HashMap<UlRef, Arc<Space>>>,
    fetcher: Option<Arc<dyn DefinitionFetcher>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

fn dv_payload(id: u64, version: u64, dv: &DomainVector, schema: &Schema) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_uint(&mut out, id)?;
    write_uint(&mut out, version)?;
    write_dv(&mut out, dv, schema, false)?;
    Ok(out)
}

impl Store {
    /// Store without files; contents vanish on drop.
    pub fn in_memory() -> Self {
        Store {
            dir: None,
            registry: RwLock::new(Registry::new()),
            def_log: Mutex::new(None),
            spaces: RwLock::new(HashMap::new()),
            fetcher: None,
        }
    }

    /// Opens (or creates) a data directory and replays its logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(dir.join("spaces"))?;
        let (def_log, defs) = LogFile::open(&dir.join("definitions.log"))?;
        let mut registry = Registry::new();
        for (kind, payload) in defs {
            if kind != RECORD_DEFINITION {
                return Err(StoreError::Corrupt(format!("unexpected record type {kind} in definitions.log")));
            }
            let def = parse_canonical(&payload)?;
            registry.publish(&def)?;
        }
        let mut spaces = HashMap::new();
        for (index, ul) in registry.spaces() {
            let path = dir.join("spaces").join(format!("{index}.log"));
            let (log, raw) = LogFile::open(&path)?;
            let mut records = Vec::with_capacity(raw.len());
            for (kind, payload) in raw {
                if kind != RECORD_DV {
                    return Err(StoreError::Corrupt(format!("unexpected record type {kind} in {}", path.display())));
                }
                let mut r = Reader::new(&payload);
                let id = r.uint()?;
                let version = r.uint()?;
                let published = registry.get(ul, Some(version)).ok_or_else(|| {
                    StoreError::Corrupt(format!("record {id} of {ul} references unknown version {version}"))
                })?;
                let dv = read_dv(&mut r, &published.schema, false)?;
                if id != records.len() as u64 {
                    return Err(StoreError::Corrupt(format!("record ids out of order in {}", path.display())));
                }
                records.push(Record::new(id, version, dv));
            }
            spaces.insert(
                ul.clone(),
                Arc::new(Space { local_index: index, log: Mutex::new(Some(log)), records: Arc::new(RwLock::new(records)) }),
            );
        }
        Ok(Store {
            dir: Some(dir),
            registry: RwLock::new(registry),
            def_log: Mutex::new(Some(def_log)),
            spaces: RwLock::new(spaces),
            fetcher: None,
        })
    }

    pub fn with_fetcher(mut self, fetcher: Arc<dyn DefinitionFetcher>) -> Self {
        self.fetcher = Some(fetcher);
        self
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn registry(&self) -> RwLockReadGuard<'_, Registry> {
        self.registry.read()
    }

    pub fn publish_definition(&self, def: &DomainDefinition) -> Result<PublishOutcome> {
        let mut reg = self.registry.write();
        let published = match reg.prepare(def)? {
            Prepared::Existing(o) => return Ok(o),
            Prepared::New(p) => p,
        };
        if let Some(log) = self.def_log.lock().as_mut() {
            log.append(RECORD_DEFINITION, &canonical_bytes(&published.def)?)?;
        }
        let outcome = reg.commit(published);
        let mut spaces = self.spaces.write();
        if !spaces.contains_key(&outcome.ul) {
            let log = match &self.dir {
                Some(dir) => Some(LogFile::open(&dir.join("spaces").join(format!("{}.log", outcome.local_index)))?.0),
                None => None,
            };
            spaces.insert(
                outcome.ul.clone(),
                Arc::new(Space {
                    local_index: outcome.local_index,
                    log: Mutex::new(log),
                    records: Arc::new(RwLock::new(Vec::new())),
                }),
            );
        }
        Ok(outcome)
    }

    /// Resolves any UL form; full URLs missing locally go to the fetch hook.
    pub fn resolve(&self, ul: &UlRef, version: Option<u64>, previous: Option<&UlRef>) -> Result<Arc<Published>> {
        let first = self.registry.read().resolve(ul, version, previous);
        match first {
            Err(RegistryError::NotFound(what)) => {
                let (Some(fetcher), UlRef::FullUrl(_)) = (&self.fetcher, ul) else {
                    return Err(StoreError::NotFound(what));
                };
                let defs = fetcher.fetch(ul).map_err(|cause| StoreError::NotFound(format!("{what} ({cause})")))?;
                for d in &defs {
                    self.publish_definition(d)
                        .map_err(|e| StoreError::NotFound(format!("{what} (fetched definition rejected: {e})")))?;
                }
                Ok(self.registry.read().resolve(ul, version, previous)?)
            }
            other => Ok(other?),
        }
    }

    fn space(&self, ul: &UlRef) -> Result<Arc<Space>> {
        self.spaces.read().get(ul).cloned().ok_or_else(|| StoreError::NotFound(ul.to_string()))
    }

    /// Latest definition of a space together with a read view of its records.
    pub fn snapshot(&self, ul: &UlRef) -> Result<Snapshot> {
        let published = self.resolve(ul, None, None)?;
        let space = self.space(&published.def.ul)?;
        let records = space.records.read_arc();
        Ok(Snapshot { published, local_index: space.local_index, records })
    }

    pub fn record_count(&self, ul: &UlRef) -> Result<usize> {
        let global = self.registry.read().canonical_ul(ul, None)?;
        Ok(self.space(&global)?.records.read().len())
    }

    /// Picks the definition version for a vector: the explicit one, or the
    /// latest version whose slot count matches.
    fn version_for(&self, space: &UlRef, slots: usize, version: Option<u64>) -> Result<Arc<Published>> {
        if let Some(v) = version {
            return self.resolve(space, Some(v), None);
        }
        let global = self.resolve(space, None, None)?.def.ul.clone();
        let reg = self.registry.read();
        reg.versions(&global).iter().rev().find(|p| p.schema.len() == slots).cloned().ok_or_else(|| {
            StoreError::ValidationFailed(vec![Violation {
                kind: ViolationKind::Invalid,
                at: "values".into(),
                message: format!("no version of {global} has {slots} slots"),
            }])
        })
    }

    pub fn insert_dv(&self, dv: DomainVector) -> Result<u64> {
        Ok(self.insert_dvs(vec![dv], None)?[0])
    }

    /// Validates every vector first, then appends all of them with one sync.
    /// Vectors may use any UL form that resolves to the same space.
    pub fn insert_dvs(&self, dvs: Vec<DomainVector>, version: Option<u64>) -> Result<Vec<u64>> {
        if dvs.is_empty() {
            return Ok(Vec::new());
        }
        let mut prepared = Vec::with_capacity(dvs.len());
        let mut target: Option<UlRef> = None;
        let mut previous: Option<UlRef> = None;
        for (i, mut dv) in dvs.into_iter().enumerate() {
            let global = self.registry.read().canonical_ul(&dv.space, previous.as_ref())?;
            previous = Some(global.clone());
            if target.get_or_insert_with(|| global.clone()) != &global {
                return Err(StoreError::ValidationFailed(vec![Violation {
                    kind: ViolationKind::Invalid,
                    at: format!("vector {i}"),
                    message: "all vectors of one insert must belong to the same space".into(),
                }]));
            }
            let published = self.version_for(&global, dv.values.len(), version)?;
            dv.space = published.def.ul.clone();
            validate_dv(&dv, &published.schema).map_err(|mut v| {
                for x in &mut v {
                    x.at = format!("vector {i}, {}", x.at);
                }
                StoreError::ValidationFailed(v)
            })?;
            prepared.push((published, dv));
        }
        let space = self.space(target.as_ref().expect("non-empty"))?;
        let mut records = space.records.write();
        let mut log = space.log.lock();
        let first = records.len() as u64;
        let mut framed = Vec::new();
        let mut fresh = Vec::with_capacity(prepared.len());
        for (k, (published, dv)) in prepared.into_iter().enumerate() {
            let id = first + k as u64;
            let version = published.def.version;
            if log.is_some() {
                let payload = dv_payload(id, version, &dv, &published.schema)?;
                log::frame(RECORD_DV, &payload, &mut framed);
            }
            fresh.push(Record::new(id, version, dv));
        }
        if let Some(log) = log.as_mut() {
            log.append_framed(&framed)?;
        }
        let ids = fresh.iter().map(|r| r.id).collect();
        records.extend(fresh);
        Ok(ids)
    }

    pub fn space_infos(&self) -> Vec<SpaceInfo> {
        let reg = self.registry.read();
        let spaces = self.spaces.read();
        reg.spaces()
            .filter_map(|(index, ul)| {
                let p = reg.get(ul, None)?;
                Some(SpaceInfo {
                    local_index: index,
                    ul: ul.clone(),
                    name: p.def.name.reference_text().unwrap_or_default().to_string(),
                    version: p.def.version,
                    content_hash: p.hash,
                    dimensions: p.schema.len(),
                    records: spaces.get(ul).map(|s| s.records.read().len()).unwrap_or(0),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DimensionDefinition;

    fn ul() -> UlRef {
        UlRef::FullUrl("https://ds.example/test".into())
    }

    fn def() -> DomainDefinition {
        DomainDefinition::new(ul(), "test")
            .with(DimensionDefinition::integer("a").bounded(0, 100))
            .with(DimensionDefinition::integer("b"))
    }

    #[test]
    fn first_insert_gets_id_zero() {
        let s = Store::in_memory();
        s.publish_definition(&def()).unwrap();
        let id = s.insert_dv(DomainVector::new(ul(), vec![Some(1.into()), None])).unwrap();
        assert_eq!(id, 0);
        assert_eq!(s.insert_dv(DomainVector::new(ul(), vec![None, None])).unwrap(), 1);
    }

    #[test]
    fn unknown_space() {
        let s = Store::in_memory();
        let dv = DomainVector::new(UlRef::FullUrl("https://nowhere".into()), vec![None]);
        assert!(matches!(s.insert_dv(dv), Err(StoreError::NotFound(_))));
        assert!(matches!(
            s.insert_dv(DomainVector::new(UlRef::LocalTableIndex(4), vec![None])),
            Err(StoreError::NotFound(_))
        ));
    }

    #[test]
    fn invalid_vector_rejected_atomically() {
        let s = Store::in_memory();
        s.publish_definition(&def()).unwrap();
        let good = DomainVector::new(ul(), vec![Some(1.into()), None]);
        let bad = DomainVector::new(ul(), vec![Some(500.into()), None]);
        assert!(matches!(s.insert_dvs(vec![good, bad], None), Err(StoreError::ValidationFailed(_))));
        assert_eq!(s.record_count(&ul()).unwrap(), 0);
    }

    #[test]
    fn local_index_and_same_as_before_forms() {
        let s = Store::in_memory();
        s.publish_definition(&def()).unwrap();
        let a = DomainVector::new(UlRef::LocalTableIndex(0), vec![Some(3.into()), None]);
        let b = DomainVector::new(UlRef::SameAsBefore, vec![Some(4.into()), None]);
        s.insert_dvs(vec![a, b], None).unwrap();
        let snap = s.snapshot(&ul()).unwrap();
        assert!(snap.iter().all(|r| r.dv.space == ul()));
        assert_eq!(snap[1].number(0), Some(4.0));
        drop(snap);
        let lone = DomainVector::new(UlRef::SameAsBefore, vec![None, None]);
        assert!(matches!(s.insert_dv(lone), Err(StoreError::ContextMissing)));
    }

    #[test]
    fn old_version_vectors_remain_valid() {
        let s = Store::in_memory();
        s.publish_definition(&def()).unwrap();
        s.publish_definition(&def().appended([DimensionDefinition::integer("c").into()])).unwrap();
        s.insert_dv(DomainVector::new(ul(), vec![Some(1.into()), None])).unwrap();
        s.insert_dv(DomainVector::new(ul(), vec![Some(1.into()), None, Some(9.into())])).unwrap();
        let snap = s.snapshot(&ul()).unwrap();
        assert_eq!((snap[0].version, snap[1].version), (1, 2));
        assert_eq!(snap[0].number(2), None);
        assert_eq!(snap[1].number(2), Some(9.0));
    }

    #[test]
    fn reopen_restores_everything() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = Store::open(dir.path()).unwrap();
            s.publish_definition(&def()).unwrap();
            s.insert_dvs((0..5).map(|i| DomainVector::new(ul(), vec![Some(i.into()), None])).collect(), None)
                .unwrap();
        }
        let s = Store::open(dir.path()).unwrap();
        let infos = s.space_infos();
        assert_eq!(infos.len(), 1);
        assert_eq!(infos[0].records, 5);
        assert_eq!(s.snapshot(&ul()).unwrap()[4].number(0), Some(4.0));
    }
}
