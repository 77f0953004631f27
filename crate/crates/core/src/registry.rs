//! In-memory registry of published definitions and the local UL table.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{CodecError, UlRef};
use crate::model::{
    content_hash, validate_definition, ContentHash, DefinitionSource, DomainDefinition, ModelError, Schema,
    SpaceComponent, Violation,
};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("same-as-before locator without context")]
    ContextMissing,
    #[error("definition rejected: {}", join(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("append-only violation: {0}")]
    AppendOnlyViolation(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A stored definition version with its expanded schema.
#[derive(Debug)]
pub struct Published {
    pub def: Arc<DomainDefinition>,
    pub hash: ContentHash,
    pub schema: Arc<Schema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PublishOutcome {
    pub ul: UlRef,
    pub version: u64,
    pub content_hash: ContentHash,
    pub local_index: u64,
    /// False when identical bytes were already registered.
    pub created: bool,
}

#[derive(Debug, Default)]
pub struct Registry {
    versions: HashMap<UlRef, Vec<Arc<Published>>>,
    by_hash: HashMap<ContentHash, (UlRef, u64)>,
    local_table: Vec<UlRef>,
    local_index: HashMap<UlRef, u64>,
}

impl DefinitionSource for Registry {
    fn definition(&self, ul: &UlRef, version: Option<u64>) -> Option<Arc<DomainDefinition>> {
        self.get(ul, version).map(|p| p.def.clone())
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ul: &UlRef, version: Option<u64>) -> Option<&Arc<Published>> {
        let list = self.versions.get(ul)?;
        match version {
            None => list.last(),
            Some(v) => list.get(usize::try_from(v).ok()?.checked_sub(1)?),
        }
    }

    pub fn versions(&self, ul: &UlRef) -> &[Arc<Published>] {
        self.versions.get(ul).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn local_table(&self) -> &[UlRef] {
        &self.local_table
    }

    pub fn local_index(&self, ul: &UlRef) -> Option<u64> {
        self.local_index.get(ul).copied()
    }

    pub fn by_hash(&self, hash: &ContentHash) -> Option<(UlRef, u64)> {
        self.by_hash.get(hash).cloned()
    }

    /// Spaces in local-table order.
    pub fn spaces(&self) -> impl Iterator<Item = (u64, &UlRef)> {
        self.local_table.iter().enumerate().map(|(i, u)| (i as u64, u))
    }

    /// Maps any UL form to the global UL it stands for.
    pub fn canonical_ul(&self, ul: &UlRef, previous: Option<&UlRef>) -> Result<UlRef, RegistryError> {
        match ul {
            UlRef::SameAsBefore => previous.cloned().ok_or(RegistryError::ContextMissing),
            UlRef::LocalTableIndex(i) => usize::try_from(*i)
                .ok()
                .and_then(|i| self.local_table.get(i))
                .cloned()
                .ok_or_else(|| RegistryError::NotFound(format!("local table index {i}"))),
            global => Ok(global.clone()),
        }
    }

    pub fn resolve(
        &self,
        ul: &UlRef,
        version: Option<u64>,
        previous: Option<&UlRef>,
    ) -> Result<Arc<Published>, RegistryError> {
        let global = self.canonical_ul(ul, previous)?;
        self.get(&global, version).cloned().ok_or_else(|| match version {
            Some(v) => RegistryError::NotFound(format!("{global} version {v}")),
            None => RegistryError::NotFound(global.to_string()),
        })
    }

    /// Pins every unpinned nested reference to the currently latest version so
    /// the flattened layout of a published definition never changes.
    pub fn pin_nested(&self, def: &DomainDefinition) -> DomainDefinition {
        let mut out = def.clone();
        for c in &mut out.components {
            if let SpaceComponent::Nested { nested } = c {
                if nested.version.is_none() {
                    nested.version = self.get(&nested.space, None).map(|p| p.def.version);
                }
            }
        }
        out
    }

    /// Checks a definition for publication. Identical content that is already
    /// registered comes back as `Prepared::Existing`.
    pub fn prepare(&self, def: &DomainDefinition) -> Result<Prepared, RegistryError> {
        let def = self.pin_nested(def);
        validate_definition(&def, self).map_err(RegistryError::ValidationFailed)?;
        let hash = content_hash(&def)?;
        if let Some((ul, version)) = self.by_hash.get(&hash) {
            return Ok(Prepared::Existing(PublishOutcome {
                ul: ul.clone(),
                version: *version,
                content_hash: hash,
                local_index: self.local_index[ul],
                created: false,
            }));
        }
        let existing = self.versions(&def.ul);
        let expected = existing.len() as u64 + 1;
        if def.version < expected {
            return Err(RegistryError::AppendOnlyViolation(format!(
                "{} version {} is already published with different content",
                def.ul, def.version
            )));
        }
        if def.version > expected {
            return Err(RegistryError::ValidationFailed(vec![Violation {
                kind: crate::model::ViolationKind::Invalid,
                at: "version".into(),
                message: format!("next version of {} must be {expected}, got {}", def.ul, def.version),
            }]));
        }
        if let Some(latest) = existing.last() {
            let old = &latest.def.components;
            if def.components.len() < old.len() || def.components[..old.len()] != old[..] {
                return Err(RegistryError::AppendOnlyViolation(format!(
                    "version {} of {} must keep the {} components of version {} unchanged and in order",
                    def.version,
                    def.ul,
                    old.len(),
                    latest.def.version
                )));
            }
        }
        let schema = Schema::build(&def, self)?;
        Ok(Prepared::New(Arc::new(Published { def: Arc::new(def), hash, schema: Arc::new(schema) })))
    }

    /// Inserts a prepared definition; returns the outcome.
    pub fn commit(&mut self, p: Arc<Published>) -> PublishOutcome {
        let ul = p.def.ul.clone();
        let version = p.def.version;
        let next = self.local_table.len() as u64;
        let local_index = *self.local_index.entry(ul.clone()).or_insert_with(|| {
            self.local_table.push(ul.clone());
            next
        });
        self.by_hash.insert(p.hash, (ul.clone(), version));
        let hash = p.hash;
        self.versions.entry(ul.clone()).or_default().push(p);
        PublishOutcome { ul, version, content_hash: hash, local_index, created: true }
    }

    pub fn publish(&mut self, def: &DomainDefinition) -> Result<PublishOutcome, RegistryError> {
        match self.prepare(def)? {
            Prepared::Existing(o) => Ok(o),
            Prepared::New(p) => Ok(self.commit(p)),
        }
    }
}

#[derive(Debug)]
pub enum Prepared {
    Existing(PublishOutcome),
    New(Arc<Published>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DimensionDefinition;

    fn ul(s: &str) -> UlRef {
        UlRef::FullUrl(format!("https://ds.example/{s}"))
    }

    fn base() -> DomainDefinition {
        DomainDefinition::new(ul("car"), "car")
            .with(DimensionDefinition::integer("doors"))
            .with(DimensionDefinition::integer("seats"))
    }

    #[test]
    fn versions_append() {
        let mut r = Registry::new();
        let v1 = base();
        let v2 = v1.appended([DimensionDefinition::integer("wheels").into()]);
        assert_eq!(r.publish(&v1).unwrap().version, 1);
        assert_eq!(r.publish(&v2).unwrap().version, 2);
        assert_eq!(r.versions(&ul("car")).len(), 2);
        assert_eq!(r.get(&ul("car"), None).unwrap().schema.len(), 3);
        assert_eq!(r.get(&ul("car"), Some(1)).unwrap().schema.len(), 2);
    }

    #[test]
    fn reorder_rejected() {
        let mut r = Registry::new();
        let v1 = base();
        r.publish(&v1).unwrap();
        let mut v2 = v1.clone();
        v2.version = 2;
        v2.components.swap(0, 1);
        assert!(matches!(r.publish(&v2), Err(RegistryError::AppendOnlyViolation(_))));
        let mut changed_v1 = v1.clone();
        changed_v1.components.pop();
        changed_v1.components.push(DimensionDefinition::integer("other").into());
        assert!(matches!(r.publish(&changed_v1), Err(RegistryError::AppendOnlyViolation(_))));
    }

    #[test]
    fn republish_is_idempotent() {
        let mut r = Registry::new();
        let first = r.publish(&base()).unwrap();
        let again = r.publish(&base()).unwrap();
        assert!(first.created);
        assert!(!again.created);
        assert_eq!(first.content_hash, again.content_hash);
        assert_eq!(first.content_hash, content_hash(&base()).unwrap());
        assert_eq!(r.versions(&ul("car")).len(), 1);
    }

    #[test]
    fn version_gap_rejected() {
        let mut r = Registry::new();
        let mut d = base();
        d.version = 3;
        assert!(matches!(r.publish(&d), Err(RegistryError::ValidationFailed(_))));
    }

    #[test]
    fn local_table_and_resolution() {
        let mut r = Registry::new();
        r.publish(&base()).unwrap();
        let other = DomainDefinition::new(UlRef::NumericHierarchic(vec![10, 5]), "x")
            .with(DimensionDefinition::integer("a"));
        assert_eq!(r.publish(&other).unwrap().local_index, 1);
        assert_eq!(r.resolve(&UlRef::LocalTableIndex(1), None, None).unwrap().def.ul, other.ul);
        assert!(matches!(r.resolve(&UlRef::SameAsBefore, None, None), Err(RegistryError::ContextMissing)));
        assert_eq!(r.resolve(&UlRef::SameAsBefore, None, Some(&ul("car"))).unwrap().def.ul, ul("car"));
        assert!(matches!(r.resolve(&ul("nope"), None, None), Err(RegistryError::NotFound(_))));
        assert!(matches!(r.resolve(&UlRef::LocalTableIndex(9), None, None), Err(RegistryError::NotFound(_))));
    }

    #[test]
    fn nested_refs_get_pinned() {
        let mut r = Registry::new();
        let len = DomainDefinition::new(ul("len"), "len").with(DimensionDefinition::integer("m"));
        r.publish(&len).unwrap();
        let c = DomainDefinition::new(ul("c"), "c").nesting(ul("len"), None, "l");
        r.publish(&c).unwrap();
        r.publish(&len.appended([DimensionDefinition::integer("cm").into()])).unwrap();
        // c stays at one dimension even though len grew
        assert_eq!(r.get(&ul("c"), None).unwrap().schema.len(), 1);
        let stored = &r.get(&ul("c"), None).unwrap().def;
        assert_eq!(stored.nested_refs().next().unwrap().version, Some(1));
    }
}
