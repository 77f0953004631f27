use std::fmt;

use serde::Serialize;

use super::{
    flatten, DefinitionSource, DimensionDefinition, DomainDefinition, DomainVector, ModelError, Representation,
    Schema, SpaceComponent, WireKind, REFERENCE_LANGUAGE,
};
use crate::value::{Scalar, MAX_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Invalid,
    UnresolvedReference,
    CycleDetected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Where the problem is, e.g. `components[2]` or `slot 4`.
    pub at: String,
    pub message: String,
}

impl Violation {
    fn invalid(at: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { kind: ViolationKind::Invalid, at: at.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.at, self.message)
    }
}

fn check_dimension(at: &str, d: &DimensionDefinition, out: &mut Vec<Violation>) {
    let mut bad = |m: String| out.push(Violation::invalid(at, m));
    if d.keyword.trim().is_empty() {
        bad("keyword must not be empty".into());
    }
    if !(d.weight.is_finite() && d.weight > 0.0) {
        bad("weight must be positive".into());
    }
    if let (Some(lo), Some(hi)) = (d.min, d.max) {
        if lo > hi {
            bad(format!("min {lo} exceeds max {hi}"));
        }
    }
    let scale = d.value_scale();
    if d.scale.is_some() && !matches!(d.representation, Representation::FloatMedium | Representation::FloatMax) {
        bad("scale applies only to floating representations".into());
    }
    if scale > MAX_SCALE {
        bad(format!("scale must be at most {MAX_SCALE}"));
    }
    match d.representation {
        Representation::Text => {
            if d.min.is_some() || d.max.is_some() {
                bad("text dimensions take no bounds".into());
            }
        }
        _ => {
            for (name, b) in [("min", d.min), ("max", d.max)] {
                if let Some(b) = b {
                    if b.rescale(scale).is_err() {
                        bad(format!("{name} {b} is not representable at scale {scale}"));
                    }
                }
            }
        }
    }
    if d.representation == Representation::List {
        if d.enum_labels.is_empty() {
            bad("list dimensions need at least one label".into());
        }
        for (i, l) in d.enum_labels.iter().enumerate() {
            if l.reference_text().is_none() {
                bad(format!("label {i} lacks the reference language entry '{REFERENCE_LANGUAGE}'"));
            }
        }
        if let Some(lo) = d.min {
            if lo.mantissa < 0 {
                bad("list bounds must be non-negative".into());
            }
        }
    } else if !d.enum_labels.is_empty() {
        bad("enum_labels are only allowed on list dimensions".into());
    }
    if d.date_format.is_some() && d.representation != Representation::Integer {
        bad("date_format requires integer representation".into());
    }
}

/// Checks every definition invariant and reports all violations found.
pub fn validate_definition(def: &DomainDefinition, source: &dyn DefinitionSource) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !def.ul.is_global() {
        out.push(Violation::invalid("ul", "definition UL must be a full URL or a numeric hierarchic pointer"));
    }
    if def.version == 0 {
        out.push(Violation::invalid("version", "versions start at 1"));
    }
    if def.name.reference_text().is_none_or(|t| t.trim().is_empty()) {
        out.push(Violation::invalid("name", format!("name needs a '{REFERENCE_LANGUAGE}' entry")));
    }
    let mut refs_ok = true;
    for (i, c) in def.components.iter().enumerate() {
        let at = format!("components[{i}]");
        match c {
            SpaceComponent::Dim(d) => check_dimension(&at, d, &mut out),
            SpaceComponent::Nested { nested } => {
                if !nested.space.is_global() {
                    out.push(Violation::invalid(&at, "nested UL must be a full URL or a numeric hierarchic pointer"));
                    refs_ok = false;
                } else if nested.space == def.ul {
                    out.push(Violation {
                        kind: ViolationKind::CycleDetected,
                        at,
                        message: format!("space nests itself ({})", def.ul),
                    });
                    refs_ok = false;
                } else if source.definition(&nested.space, nested.version).is_none() {
                    out.push(Violation {
                        kind: ViolationKind::UnresolvedReference,
                        at,
                        message: format!("unknown space {} (version {:?})", nested.space, nested.version),
                    });
                    refs_ok = false;
                }
            }
        }
    }
    if refs_ok {
        match flatten(def, source) {
            Ok(flat) if flat.is_empty() => {
                out.push(Violation::invalid("components", "a space needs at least one dimension"))
            }
            Ok(_) => {}
            Err(ModelError::CycleDetected(path)) => out.push(Violation {
                kind: ViolationKind::CycleDetected,
                at: "components".into(),
                message: format!("nesting cycle {}", path.join(" -> ")),
            }),
            Err(e @ ModelError::UnresolvedReference { .. }) => out.push(Violation {
                kind: ViolationKind::UnresolvedReference,
                at: "components".into(),
                message: e.to_string(),
            }),
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Checks slot count, required slots, value kinds and bounds.
pub fn validate_dv(dv: &DomainVector, schema: &Schema) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if dv.values.len() != schema.dims.len() {
        out.push(Violation::invalid(
            "values",
            format!("vector has {} slots, space has {}", dv.values.len(), schema.dims.len()),
        ));
        return Err(out);
    }
    for (j, (v, fd)) in dv.values.iter().zip(&schema.dims).enumerate() {
        let at = format!("slot {j} ({})", fd.def.keyword);
        let d = &fd.def;
        let Some(v) = v else {
            if d.required {
                out.push(Violation::invalid(at, "required value is absent"));
            }
            continue;
        };
        match (d.wire_kind(), v) {
            (WireKind::Text, Scalar::Text(_)) => {}
            (WireKind::Text, Scalar::Number(_)) => out.push(Violation::invalid(at, "expected text")),
            (_, Scalar::Text(_)) => out.push(Violation::invalid(at, "expected a number")),
            (kind, Scalar::Number(n)) => {
                let scale = match kind {
                    WireKind::Signed { scale } => scale,
                    _ => 0,
                };
                if n.scale != scale {
                    out.push(Violation::invalid(&at, format!("value {n} must have scale {scale}")));
                    continue;
                }
                if !(-(1i64 << 60)..(1i64 << 60)).contains(&n.mantissa) {
                    out.push(Violation::invalid(&at, format!("value {n} exceeds the encodable range")));
                    continue;
                }
                if kind == WireKind::Index && (n.mantissa < 0 || n.mantissa as usize >= d.enum_labels.len()) {
                    out.push(Violation::invalid(
                        &at,
                        format!("index {n} outside 0..{}", d.enum_labels.len()),
                    ));
                }
                if let Some(lo) = d.min {
                    if *n < lo {
                        out.push(Violation::invalid(&at, format!("value {n} below min {lo}")));
                    }
                }
                if let Some(hi) = d.max {
                    if *n > hi {
                        out.push(Violation::invalid(&at, format!("value {n} above max {hi}")));
                    }
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
