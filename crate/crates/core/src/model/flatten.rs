use std::sync::Arc;

use super::{DimensionDefinition, DomainDefinition, GlobalDimensionId, ModelError, SpaceComponent};
use crate::codec::UlRef;

/// Lookup of published definitions by UL and optional version pin
/// (`None` means latest).
pub trait DefinitionSource {
    fn definition(&self, ul: &UlRef, version: Option<u64>) -> Option<Arc<DomainDefinition>>;
}

impl<T: DefinitionSource + ?Sized> DefinitionSource for &T {
    fn definition(&self, ul: &UlRef, version: Option<u64>) -> Option<Arc<DomainDefinition>> {
        (**self).definition(ul, version)
    }
}

/// Plain list of definitions, handy for tests and one-off tools.
#[derive(Debug, Default, Clone)]
pub struct MemorySource {
    defs: Vec<Arc<DomainDefinition>>,
}

impl MemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, def: DomainDefinition) -> &mut Self {
        self.defs.push(Arc::new(def));
        self
    }

    pub fn with(mut self, def: DomainDefinition) -> Self {
        self.add(def);
        self
    }
}

impl DefinitionSource for MemorySource {
    fn definition(&self, ul: &UlRef, version: Option<u64>) -> Option<Arc<DomainDefinition>> {
        self.defs
            .iter()
            .filter(|d| &d.ul == ul && version.is_none_or(|v| d.version == v))
            .max_by_key(|d| d.version)
            .cloned()
    }
}

/// One leaf dimension after expanding nesting.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatDim {
    /// Component indices from the root definition down to the dimension.
    pub path: Vec<u32>,
    pub gid: GlobalDimensionId,
    pub def: DimensionDefinition,
}

/// Depth-first expansion in component order. Dimensions keep the identity of
/// the space that defines them, however deeply they are nested.
pub fn flatten(def: &DomainDefinition, source: &dyn DefinitionSource) -> Result<Vec<FlatDim>, ModelError> {
    let mut stack = Vec::new();
    flatten_rec(def, source, &mut stack)
}

fn flatten_rec(
    def: &DomainDefinition,
    source: &dyn DefinitionSource,
    stack: &mut Vec<UlRef>,
) -> Result<Vec<FlatDim>, ModelError> {
    stack.push(def.ul.clone());
    let mut out: Vec<FlatDim> = Vec::new();
    for (ci, comp) in def.components.iter().enumerate() {
        let ci = ci as u32;
        match comp {
            SpaceComponent::Dim(d) => {
                let gid = GlobalDimensionId { origin_space: def.ul.clone(), origin_index: out.len() as u32 };
                out.push(FlatDim { path: vec![ci], gid, def: d.clone() });
            }
            SpaceComponent::Nested { nested } => {
                if stack.contains(&nested.space) {
                    let mut cycle: Vec<String> = stack.iter().map(ToString::to_string).collect();
                    cycle.push(nested.space.to_string());
                    return Err(ModelError::CycleDetected(cycle));
                }
                let sub = source.definition(&nested.space, nested.version).ok_or_else(|| {
                    ModelError::UnresolvedReference { ul: nested.space.clone(), version: nested.version }
                })?;
                for mut fd in flatten_rec(&sub, source, stack)? {
                    fd.path.insert(0, ci);
                    out.push(fd);
                }
            }
        }
    }
    stack.pop();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ul(s: &str) -> UlRef {
        UlRef::FullUrl(format!("https://ds.example/{s}"))
    }

    #[test]
    fn identity_flatten() {
        let a = DomainDefinition::new(ul("a"), "a")
            .with(DimensionDefinition::integer("A"))
            .with(DimensionDefinition::integer("B"));
        let flat = flatten(&a, &MemorySource::new()).unwrap();
        assert_eq!(flat.len(), 2);
        assert_eq!(flat[0].path, vec![0]);
        assert_eq!(flat[1].path, vec![1]);
        assert_eq!(flat[1].gid, GlobalDimensionId { origin_space: ul("a"), origin_index: 1 });
        assert_eq!(flat[0].def.keyword, "A");
    }

    #[test]
    fn nested_dims_keep_origin() {
        let len = DomainDefinition::new(ul("len"), "Len").with(DimensionDefinition::integer("length_m"));
        let wid = DomainDefinition::new(ul("wid"), "Wid").with(DimensionDefinition::integer("width_m"));
        let c = DomainDefinition::new(ul("c"), "C").nesting(ul("len"), Some(1), "l").nesting(ul("wid"), Some(1), "w");
        let src = MemorySource::new().with(len).with(wid);
        let flat = flatten(&c, &src).unwrap();
        assert_eq!(flat.len(), 2);
        assert_eq!(flat[0].gid.origin_space, ul("len"));
        assert_eq!(flat[0].gid.origin_index, 0);
        assert_eq!(flat[1].gid.origin_space, ul("wid"));
        assert_eq!(flat[1].path, vec![1, 0]);
    }

    #[test]
    fn cycles_and_missing_refs() {
        let a = DomainDefinition::new(ul("a"), "a").nesting(ul("a"), None, "self");
        assert!(matches!(flatten(&a, &MemorySource::new()), Err(ModelError::CycleDetected(_))));

        let b = DomainDefinition::new(ul("b"), "b").nesting(ul("zzz"), None, "x");
        assert!(matches!(flatten(&b, &MemorySource::new()), Err(ModelError::UnresolvedReference { .. })));

        // a -> b -> a through the source
        let a2 = DomainDefinition::new(ul("a"), "a").nesting(ul("b"), None, "b");
        let b2 = DomainDefinition::new(ul("b"), "b").nesting(ul("a"), None, "a");
        let src = MemorySource::new().with(a2.clone()).with(b2);
        assert!(matches!(flatten(&a2, &src), Err(ModelError::CycleDetected(_))));
    }

    #[test]
    fn pinned_versions_resolve_exactly() {
        let v1 = DomainDefinition::new(ul("x"), "x").with(DimensionDefinition::integer("p"));
        let v2 = v1.appended([DimensionDefinition::integer("q").into()]);
        let src = MemorySource::new().with(v1).with(v2);
        let pinned = DomainDefinition::new(ul("y"), "y").nesting(ul("x"), Some(1), "x");
        let latest = DomainDefinition::new(ul("y"), "y").nesting(ul("x"), None, "x");
        assert_eq!(flatten(&pinned, &src).unwrap().len(), 1);
        assert_eq!(flatten(&latest, &src).unwrap().len(), 2);
    }
}
