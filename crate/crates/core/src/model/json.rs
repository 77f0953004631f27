//! JSON form of Domain Vectors. Slot values are `null`, numbers or strings;
//! decimals are written as strings, date dimensions in their declared format
//! and list dimensions accept either the index or a reference-language label.

use serde_json::{json, Value};

use super::{DimensionDefinition, DomainVector, Schema, WireKind};
use crate::codec::UlRef;
use crate::value::{decimal_from_json, Decimal, Scalar, ValueError};

pub fn scalar_from_json(v: &Value, d: &DimensionDefinition) -> Result<Option<Scalar>, ValueError> {
    if v.is_null() {
        return Ok(None);
    }
    let shape = |m: &str| ValueError::Shape(format!("{}: {m}", d.keyword));
    match d.wire_kind() {
        WireKind::Text => match v {
            Value::String(s) => Ok(Some(Scalar::Text(s.clone()))),
            _ => Err(shape("expected a string")),
        },
        WireKind::Index => {
            if let Value::String(s) = v {
                if let Some(i) = d.enum_labels.iter().position(|l| l.reference_text() == Some(s.as_str())) {
                    return Ok(Some(Scalar::Number(Decimal::integer(i as i64))));
                }
            }
            let n = decimal_from_json(v)?.rescale(0)?;
            if n.mantissa < 0 {
                return Err(shape("index must be non-negative"));
            }
            Ok(Some(Scalar::Number(n)))
        }
        WireKind::Signed { scale } => {
            if let (Some(fmt), Value::String(s)) = (d.date_format, v) {
                if s.parse::<Decimal>().is_err() {
                    return Ok(Some(Scalar::Number(Decimal::integer(fmt.parse(s)?))));
                }
            }
            Ok(Some(Scalar::Number(decimal_from_json(v)?.rescale(scale)?)))
        }
    }
}

pub fn scalar_to_json(s: &Scalar, d: &DimensionDefinition) -> Value {
    match s {
        Scalar::Text(t) => Value::String(t.clone()),
        Scalar::Number(n) => {
            if let Some(text) = d.date_format.filter(|_| n.scale == 0).and_then(|f| f.format(n.mantissa)) {
                return Value::String(text);
            }
            if n.scale == 0 {
                json!(n.mantissa)
            } else {
                Value::String(n.to_string())
            }
        }
    }
}

/// Accepts `{"space": <ul>, "values": [...]}` or a bare value array; a missing
/// space defaults to the schema's UL.
pub fn dv_from_json(v: &Value, schema: &Schema) -> Result<DomainVector, ValueError> {
    let (space, values) = match v {
        Value::Array(a) => (schema.ul.clone(), a),
        Value::Object(o) => {
            let space = match o.get("space") {
                None | Some(Value::Null) => schema.ul.clone(),
                Some(s) => serde_json::from_value::<UlRef>(s.clone()).map_err(|e| ValueError::Shape(e.to_string()))?,
            };
            match o.get("values") {
                Some(Value::Array(a)) => (space, a),
                _ => return Err(ValueError::Shape("missing \"values\" array".into())),
            }
        }
        _ => return Err(ValueError::Shape("expected an object or array".into())),
    };
    if values.len() != schema.len() {
        return Err(ValueError::Shape(format!("expected {} values, got {}", schema.len(), values.len())));
    }
    let values = values
        .iter()
        .zip(&schema.dims)
        .map(|(v, fd)| scalar_from_json(v, &fd.def))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DomainVector { space, values })
}

pub fn dv_to_json(dv: &DomainVector, schema: &Schema) -> Value {
    let values: Vec<Value> = dv
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| match (v, schema.dim(j)) {
            (Some(s), Some(d)) => scalar_to_json(s, d),
            (Some(Scalar::Number(n)), None) => Value::String(n.to_string()),
            (Some(Scalar::Text(t)), None) => Value::String(t.clone()),
            (None, _) => Value::Null,
        })
        .collect();
    json!({ "space": dv.space, "values": values })
}
