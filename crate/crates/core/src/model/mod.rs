//! Domain Space definitions, flattened schemas and Domain Vectors.

pub(crate) mod canonical;
mod flatten;
mod info;
mod json;
pub mod time;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::UlRef;
use crate::value::{Decimal, Scalar};

pub use canonical::{canonical_bytes, content_hash, parse_canonical, ContentHash};
pub use flatten::{flatten, DefinitionSource, FlatDim, MemorySource};
pub use info::{information_content, InformationContent};
pub use json::{dv_from_json, dv_to_json, scalar_from_json, scalar_to_json};
pub use time::DateFormat;
pub use validate::{validate_definition, validate_dv, Violation, ViolationKind};

/// Language tag every multilingual map must carry.
pub const REFERENCE_LANGUAGE: &str = "en";

pub const DEFAULT_FLOAT_MEDIUM_SCALE: u8 = 6;
pub const DEFAULT_FLOAT_MAX_SCALE: u8 = 15;
pub const MONEY_SCALE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unresolved reference to {ul} (version {version:?})")]
    UnresolvedReference { ul: UlRef, version: Option<u64> },
    #[error("nesting cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
}

/// Language tag to text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMap(pub BTreeMap<String, String>);

impl LabelMap {
    pub fn reference(text: impl Into<String>) -> Self {
        let mut m = BTreeMap::new();
        m.insert(REFERENCE_LANGUAGE.to_string(), text.into());
        LabelMap(m)
    }

    pub fn with(mut self, lang: impl Into<String>, text: impl Into<String>) -> Self {
        self.0.insert(lang.into(), text.into());
        self
    }

    pub fn get(&self, lang: &str) -> Option<&str> {
        self.0.get(lang).map(String::as_str)
    }

    pub fn reference_text(&self) -> Option<&str> {
        self.get(REFERENCE_LANGUAGE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    List,
    Text,
    Integer,
    Money,
    FloatMedium,
    FloatMax,
}

impl Representation {
    pub const ALL: [Representation; 6] = [
        Representation::List,
        Representation::Text,
        Representation::Integer,
        Representation::Money,
        Representation::FloatMedium,
        Representation::FloatMax,
    ];

    pub(crate) fn code(self) -> u8 {
        match self {
            Representation::List => 0,
            Representation::Text => 1,
            Representation::Integer => 2,
            Representation::Money => 3,
            Representation::FloatMedium => 4,
            Representation::FloatMax => 5,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

/// How a slot's value is laid out on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireKind {
    /// Non-negative enumeration index, plain self-extending integer.
    Index,
    /// Zig-zag mantissa at a fixed decimal scale.
    Signed { scale: u8 },
    /// Length-prefixed UTF-8.
    Text,
}

fn default_weight() -> f64 {
    1.0
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One dimension of a Domain Space, mirroring the dimension editor fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionDefinition {
    pub keyword: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword_link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Decimal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Decimal>,
    #[serde(default = "default_weight")]
    pub weight: f64,
    pub representation: Representation,
    /// Decimal places for the floating representations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_format: Option<DateFormat>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub enum_labels: Vec<LabelMap>,
}

impl DimensionDefinition {
    pub fn new(keyword: impl Into<String>, representation: Representation) -> Self {
        DimensionDefinition {
            keyword: keyword.into(),
            keyword_link: None,
            unit: None,
            unit_link: None,
            comment: None,
            min: None,
            max: None,
            weight: 1.0,
            representation,
            scale: None,
            date_format: None,
            required: false,
            enum_labels: Vec::new(),
        }
    }

    pub fn integer(keyword: impl Into<String>) -> Self {
        Self::new(keyword, Representation::Integer)
    }

    pub fn text(keyword: impl Into<String>) -> Self {
        Self::new(keyword, Representation::Text)
    }

    pub fn list<I, S>(keyword: impl Into<String>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut d = Self::new(keyword, Representation::List);
        d.enum_labels = labels.into_iter().map(|l| LabelMap::reference(l)).collect();
        d
    }

    pub fn bounded(mut self, min: i64, max: i64) -> Self {
        self.min = Some(Decimal::integer(min));
        self.max = Some(Decimal::integer(max));
        self
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    /// Decimal scale of values in this dimension (0 for non-decimal kinds).
    pub fn value_scale(&self) -> u8 {
        match self.representation {
            Representation::Money => MONEY_SCALE,
            Representation::FloatMedium => self.scale.unwrap_or(DEFAULT_FLOAT_MEDIUM_SCALE),
            Representation::FloatMax => self.scale.unwrap_or(DEFAULT_FLOAT_MAX_SCALE),
            _ => 0,
        }
    }

    pub fn wire_kind(&self) -> WireKind {
        match self.representation {
            Representation::Text => WireKind::Text,
            Representation::List => WireKind::Index,
            _ => WireKind::Signed { scale: self.value_scale() },
        }
    }

    /// Text dimensions never take part in distances or statistics.
    pub fn is_metric(&self) -> bool {
        self.representation != Representation::Text
    }
}

/// Reference to another space whose dimensions are included in place.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedRef {
    pub space: UlRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceComponent {
    Nested { nested: NestedRef },
    Dim(DimensionDefinition),
}

impl SpaceComponent {
    pub fn nested(space: UlRef, version: Option<u64>, label: impl Into<String>) -> Self {
        SpaceComponent::Nested { nested: NestedRef { space, version, label: label.into() } }
    }
}

impl From<DimensionDefinition> for SpaceComponent {
    fn from(d: DimensionDefinition) -> Self {
        SpaceComponent::Dim(d)
    }
}

/// Versioned definition of a Domain Space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDefinition {
    pub ul: UlRef,
    pub version: u64,
    pub name: LabelMap,
    pub components: Vec<SpaceComponent>,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub created: i64,
}

impl DomainDefinition {
    pub fn new(ul: UlRef, name: impl Into<String>) -> Self {
        DomainDefinition { ul, version: 1, name: LabelMap::reference(name), components: Vec::new(), created: 0 }
    }

    pub fn with(mut self, c: impl Into<SpaceComponent>) -> Self {
        self.components.push(c.into());
        self
    }

    pub fn nesting(mut self, space: UlRef, version: Option<u64>, label: impl Into<String>) -> Self {
        self.components.push(SpaceComponent::nested(space, version, label));
        self
    }

    /// Next version with extra components appended.
    pub fn appended<I: IntoIterator<Item = SpaceComponent>>(&self, extra: I) -> Self {
        let mut next = self.clone();
        next.version += 1;
        next.components.extend(extra);
        next
    }

    pub fn nested_refs(&self) -> impl Iterator<Item = &NestedRef> {
        self.components.iter().filter_map(|c| match c {
            SpaceComponent::Nested { nested } => Some(nested),
            SpaceComponent::Dim(_) => None,
        })
    }
}

/// Identity of a searchable quantity: the space that defines the dimension
/// and the dimension's flattened index there.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlobalDimensionId {
    pub origin_space: UlRef,
    pub origin_index: u32,
}

impl fmt::Display for GlobalDimensionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin_space, self.origin_index)
    }
}

impl std::str::FromStr for GlobalDimensionId {
    type Err = crate::codec::CodecError;

    /// Parses `<ul>#<index>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ul, idx) = s.rsplit_once('#').ok_or(crate::codec::CodecError::EmptyPath)?;
        Ok(GlobalDimensionId {
            origin_space: ul.parse()?,
            origin_index: idx.parse().map_err(|_| crate::codec::CodecError::NonCanonical)?,
        })
    }
}

/// A definition version with all nesting expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub ul: UlRef,
    pub version: u64,
    pub dims: Vec<FlatDim>,
}

impl Schema {
    pub fn build(def: &DomainDefinition, source: &dyn DefinitionSource) -> Result<Schema, ModelError> {
        Ok(Schema { ul: def.ul.clone(), version: def.version, dims: flatten(def, source)? })
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dim(&self, index: usize) -> Option<&DimensionDefinition> {
        self.dims.get(index).map(|d| &d.def)
    }

    pub fn index_of(&self, gid: &GlobalDimensionId) -> Option<usize> {
        self.dims.iter().position(|d| &d.gid == gid)
    }

    pub fn all_absent(&self) -> Vec<Option<Scalar>> {
        vec![None; self.dims.len()]
    }
}

/// A UL plus one optional value per flattened dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DomainVector {
    pub space: UlRef,
    pub values: Vec<Option<Scalar>>,
}

impl DomainVector {
    pub fn new(space: UlRef, values: Vec<Option<Scalar>>) -> Self {
        DomainVector { space, values }
    }

    pub fn get(&self, slot: usize) -> Option<&Scalar> {
        self.values.get(slot).and_then(Option::as_ref)
    }

    pub fn number(&self, slot: usize) -> Option<f64> {
        self.get(slot).and_then(Scalar::as_f64)
    }
}

