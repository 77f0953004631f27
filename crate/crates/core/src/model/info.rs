use serde::Serialize;

use super::{flatten, DefinitionSource, DimensionDefinition, DomainDefinition, ModelError, Representation};

/// Information content of one vector of a space, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationContent {
    Bits(f64),
    Unbounded,
}

impl InformationContent {
    pub fn bits(self) -> Option<f64> {
        match self {
            InformationContent::Bits(b) => Some(b),
            InformationContent::Unbounded => None,
        }
    }
}

/// Number of distinct values a dimension can hold, if finite.
pub(crate) fn domain_size(d: &DimensionDefinition) -> Option<u128> {
    if d.representation == Representation::List {
        return Some(d.enum_labels.len() as u128);
    }
    let scale = d.value_scale();
    let lo = d.min?.rescale(scale).ok()?.mantissa as i128;
    let hi = d.max?.rescale(scale).ok()?.mantissa as i128;
    (hi >= lo).then(|| (hi - lo) as u128 + 1)
}

/// `log2 N` summed over the flattened non-text dimensions, where `N` is the
/// number of values a dimension admits (label count for lists, grid points
/// between the bounds at the dimension's scale otherwise).
pub fn information_content(
    def: &DomainDefinition,
    source: &dyn DefinitionSource,
) -> Result<InformationContent, ModelError> {
    let mut bits = 0.0;
    for fd in flatten(def, source)? {
        if !fd.def.is_metric() {
            continue;
        }
        match domain_size(&fd.def) {
            Some(n) if n > 0 => bits += (n as f64).log2(),
            _ => return Ok(InformationContent::Unbounded),
        }
    }
    Ok(InformationContent::Bits(bits))
}
