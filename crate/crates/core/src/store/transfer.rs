//! Space export/import for mirroring, and the definition fetch hook.
//!
//! Export stream:
//!
//! ```text
//! "DVX1"
//! definitions   uint count, then (uint length, canonical bytes) each;
//!               nested dependencies first, the exported space last
//! records       uint count, then (uint version, vector) each; the first
//!               vector carries the full UL, the rest same-as-before
//! ```

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use super::{Result, Store, StoreError};
use crate::codec::{read_dv, write_dv, write_uint, CodecError, Reader, UlRef};
use crate::model::{canonical_bytes, parse_canonical, DomainDefinition, DomainVector};
use crate::registry::Registry;

pub const EXPORT_MAGIC: &[u8; 4] = b"DVX1";

/// Source of definitions for full-URL locators that are not known locally.
/// Returns every version of the space, oldest first, with any nested
/// dependencies before the definitions that use them.
pub trait DefinitionFetcher: Send + Sync {
    fn fetch(&self, ul: &UlRef) -> std::result::Result<Vec<DomainDefinition>, String>;
}

pub fn encode_definitions(defs: &[DomainDefinition]) -> std::result::Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    write_definitions(&mut out, defs.iter())?;
    Ok(out)
}

fn write_definitions<'a>(
    out: &mut Vec<u8>,
    defs: impl ExactSizeIterator<Item = &'a DomainDefinition>,
) -> std::result::Result<(), CodecError> {
    write_uint(out, defs.len() as u64)?;
    for d in defs {
        let bytes = canonical_bytes(d)?;
        write_uint(out, bytes.len() as u64)?;
        out.extend_from_slice(&bytes);
    }
    Ok(())
}

fn read_definitions(r: &mut Reader<'_>) -> std::result::Result<Vec<DomainDefinition>, CodecError> {
    let n = r.uint()?;
    let mut defs = Vec::new();
    for _ in 0..n {
        let len = r.uint()? as usize;
        defs.push(parse_canonical(r.bytes(len)?)?);
    }
    Ok(defs)
}

pub fn decode_definitions(bytes: &[u8]) -> std::result::Result<Vec<DomainDefinition>, CodecError> {
    let mut r = Reader::new(bytes);
    let defs = read_definitions(&mut r)?;
    if !r.is_empty() {
        return Err(CodecError::NonCanonical);
    }
    Ok(defs)
}

/// Fetches definitions from a directory of static files, one file per UL
/// named by the hex SHA-256 of the UL text. Works with any mirror that can
/// serve or sync plain files.
#[derive(Debug, Clone)]
pub struct StaticDirFetcher {
    root: PathBuf,
}

impl StaticDirFetcher {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        StaticDirFetcher { root: root.into() }
    }

    pub fn file_name(ul: &UlRef) -> String {
        format!("{}.dvd", crate::model::canonical::hash_bytes(ul.to_string().as_bytes()))
    }

    pub fn path_for(&self, ul: &UlRef) -> PathBuf {
        self.root.join(Self::file_name(ul))
    }

    /// Writes `defs` where `fetch` will look for `ul`.
    pub fn mirror(&self, ul: &UlRef, defs: &[DomainDefinition]) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.root)?;
        let bytes = encode_definitions(defs).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
        std::fs::write(self.path_for(ul), bytes)
    }
}

impl DefinitionFetcher for StaticDirFetcher {
    fn fetch(&self, ul: &UlRef) -> std::result::Result<Vec<DomainDefinition>, String> {
        let path = self.path_for(ul);
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        decode_definitions(&bytes).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Dependencies first, then the space itself; each with all versions it needs.
fn export_order(reg: &Registry, root: &UlRef) -> Vec<(UlRef, u64)> {
    let mut needed: HashMap<UlRef, u64> = HashMap::new();
    needed.insert(root.clone(), reg.versions(root).len() as u64);
    let mut work = vec![root.clone()];
    while let Some(ul) = work.pop() {
        let upto = needed[&ul];
        for p in reg.versions(&ul).iter().take(upto as usize) {
            for n in p.def.nested_refs() {
                let v = n.version.unwrap_or_else(|| reg.versions(&n.space).len() as u64);
                let e = needed.entry(n.space.clone()).or_insert(0);
                if v > *e {
                    *e = v;
                    work.push(n.space.clone());
                }
            }
        }
    }
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    fn visit(
        ul: &UlRef,
        reg: &Registry,
        needed: &HashMap<UlRef, u64>,
        seen: &mut HashSet<UlRef>,
        order: &mut Vec<(UlRef, u64)>,
    ) {
        if !seen.insert(ul.clone()) {
            return;
        }
        for p in reg.versions(ul).iter().take(needed[ul] as usize) {
            for n in p.def.nested_refs() {
                visit(&n.space, reg, needed, seen, order);
            }
        }
        order.push((ul.clone(), needed[ul]));
    }
    visit(root, reg, &needed, &mut seen, &mut order);
    order
}

impl Store {
    pub fn export_space(&self, ul: &UlRef) -> Result<Vec<u8>> {
        let snap = self.snapshot(ul)?;
        let root = snap.ul().clone();
        let mut out = EXPORT_MAGIC.to_vec();
        {
            let reg = self.registry();
            let defs: Vec<DomainDefinition> = export_order(&reg, &root)
                .into_iter()
                .flat_map(|(u, upto)| {
                    reg.versions(&u).iter().take(upto as usize).map(|p| (*p.def).clone()).collect::<Vec<_>>()
                })
                .collect();
            write_definitions(&mut out, defs.iter())?;
        }
        write_uint(&mut out, snap.len() as u64)?;
        let reg = self.registry();
        for (i, rec) in snap.iter().enumerate() {
            let schema = &reg
                .get(&root, Some(rec.version))
                .ok_or_else(|| StoreError::Corrupt(format!("missing version {}", rec.version)))?
                .schema;
            write_uint(&mut out, rec.version)?;
            if i == 0 {
                write_dv(&mut out, &rec.dv, schema, false)?;
            } else {
                let dv = DomainVector { space: UlRef::SameAsBefore, values: rec.dv.values.clone() };
                write_dv(&mut out, &dv, schema, true)?;
            }
        }
        Ok(out)
    }

    /// Imports an export stream; returns the number of vectors inserted.
    /// The target space must not hold any vectors yet.
    pub fn import_space(&self, bytes: &[u8]) -> Result<usize> {
        if bytes.len() < 4 || &bytes[..4] != EXPORT_MAGIC {
            return Err(StoreError::Corrupt("not a DVX1 export stream".into()));
        }
        let mut r = Reader::new(&bytes[4..]);
        let defs = read_definitions(&mut r)?;
        let target = defs.last().ok_or_else(|| StoreError::Corrupt("export without definitions".into()))?.ul.clone();
        if self.registry().get(&target, None).is_some() && self.record_count(&target)? > 0 {
            return Err(StoreError::Conflict(format!("space {target} already holds vectors")));
        }
        for d in &defs {
            let existing = self.registry().get(&d.ul, Some(d.version)).map(|p| p.hash);
            match existing {
                Some(h) if h == crate::model::content_hash(d)? => continue,
                Some(_) => {
                    return Err(StoreError::Conflict(format!("{} version {} differs from the local copy", d.ul, d.version)))
                }
                None => {
                    self.publish_definition(d)?;
                }
            }
        }
        let n = r.uint()?;
        let mut runs: Vec<(u64, Vec<DomainVector>)> = Vec::new();
        for i in 0..n {
            let version = r.uint()?;
            let schema = self.resolve(&target, Some(version), None)?.schema.clone();
            let mut dv = read_dv(&mut r, &schema, i > 0)?;
            if dv.space == UlRef::SameAsBefore {
                dv.space = target.clone();
            }
            match runs.last_mut() {
                Some((v, list)) if *v == version => list.push(dv),
                _ => runs.push((version, vec![dv])),
            }
        }
        if !r.is_empty() {
            return Err(StoreError::Corrupt("trailing bytes after export records".into()));
        }
        let mut count = 0;
        for (version, dvs) in runs {
            count += self.insert_dvs(dvs, Some(version))?.len();
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::TAG_SAME_AS_BEFORE;
    use crate::model::DimensionDefinition;

    fn ul(s: &str) -> UlRef {
        UlRef::FullUrl(format!("https://ds.example/{s}"))
    }

    fn populated() -> Store {
        let s = Store::in_memory();
        let len = DomainDefinition::new(ul("len"), "len").with(DimensionDefinition::integer("m"));
        s.publish_definition(&len).unwrap();
        s.publish_definition(&len.appended([DimensionDefinition::integer("cm").into()])).unwrap();
        let room = DomainDefinition::new(ul("room"), "room")
            .with(DimensionDefinition::integer("floor"))
            .nesting(ul("len"), Some(2), "len");
        s.publish_definition(&room).unwrap();
        for i in 0..4 {
            s.insert_dv(DomainVector::new(ul("room"), vec![Some(i.into()), None, Some((i * 10).into())])).unwrap();
        }
        s
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let a = populated();
        let bytes = a.export_space(&ul("room")).unwrap();
        let b = Store::in_memory();
        assert_eq!(b.import_space(&bytes).unwrap(), 4);
        assert_eq!(b.export_space(&ul("room")).unwrap(), bytes);
        let ha = a.registry().get(&ul("room"), None).unwrap().hash;
        let hb = b.registry().get(&ul("room"), None).unwrap().hash;
        assert_eq!(ha, hb);
    }

    #[test]
    fn full_ul_once_then_same_as_before() {
        let a = populated();
        let bytes = a.export_space(&ul("room")).unwrap();
        // walk the record section and count locator tags
        let mut r = Reader::new(&bytes[4..]);
        read_definitions(&mut r).unwrap();
        let n = r.uint().unwrap();
        let schema = a.resolve(&ul("room"), None, None).unwrap().schema.clone();
        let mut tags = Vec::new();
        for i in 0..n {
            r.uint().unwrap();
            let pos = r.position();
            tags.push(bytes[4 + pos]);
            read_dv(&mut r, &schema, i > 0).unwrap();
        }
        assert_eq!(tags.iter().filter(|t| **t == TAG_SAME_AS_BEFORE).count(), 3);
        assert_eq!(tags[0], crate::codec::TAG_FULL_URL);
    }

    #[test]
    fn import_into_non_empty_space_conflicts() {
        let a = populated();
        let bytes = a.export_space(&ul("room")).unwrap();
        assert!(matches!(a.import_space(&bytes), Err(StoreError::Conflict(_))));
    }

    #[test]
    fn fetch_hook_fills_missing_definitions() {
        let dir = tempfile::tempdir().unwrap();
        let fetcher = StaticDirFetcher::new(dir.path());
        let remote = DomainDefinition::new(ul("remote"), "remote").with(DimensionDefinition::integer("x"));
        fetcher.mirror(&ul("remote"), std::slice::from_ref(&remote)).unwrap();
        let s = Store::in_memory().with_fetcher(std::sync::Arc::new(fetcher));
        assert_eq!(s.resolve(&ul("remote"), None, None).unwrap().def.version, 1);
        let id = s.insert_dv(DomainVector::new(ul("remote"), vec![Some(1.into())])).unwrap();
        assert_eq!(id, 0);
        match s.resolve(&ul("absent"), None, None) {
            Err(StoreError::NotFound(msg)) => assert!(msg.contains(".dvd"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
