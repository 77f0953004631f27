//! Deterministic binary form of a definition and its SHA-256 content hash.
//!
//! ```text
//! version  uint
//! ul       locator (no context)
//! created  zig-zag uint
//! name     label map
//! count    uint, then per component:
//!   0x00 dimension | 0x01 nested
//! ```
//!
//! Strings are length-prefixed, optional fields carry a 0/1 presence byte and
//! label maps are written in language-tag order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::{DateFormat, DimensionDefinition, DomainDefinition, LabelMap, NestedRef, Representation, SpaceComponent};
use crate::codec::{read_ul, write_int, write_string, write_uint, write_ul, CodecError, Reader, Result};
use crate::value::Decimal;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({self})")
    }
}

impl FromStr for ContentHash {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.len() != 64 || !s.is_ascii() {
            return Err(format!("expected 64 hex digits, got {s:?}"));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hex = std::str::from_utf8(chunk).map_err(|e| e.to_string())?;
            out[i] = u8::from_str_radix(hex, 16).map_err(|e| e.to_string())?;
        }
        Ok(ContentHash(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn write_opt_str(out: &mut Vec<u8>, s: &Option<String>) -> Result<()> {
    match s {
        None => out.push(0),
        Some(s) => {
            out.push(1);
            write_string(out, s)?;
        }
    }
    Ok(())
}

fn write_decimal(out: &mut Vec<u8>, d: Decimal) -> Result<()> {
    write_int(out, d.mantissa)?;
    out.push(d.scale);
    Ok(())
}

fn write_opt_decimal(out: &mut Vec<u8>, d: Option<Decimal>) -> Result<()> {
    match d {
        None => out.push(0),
        Some(d) => {
            out.push(1);
            write_decimal(out, d)?;
        }
    }
    Ok(())
}

fn write_labels(out: &mut Vec<u8>, m: &LabelMap) -> Result<()> {
    write_uint(out, m.0.len() as u64)?;
    for (k, v) in &m.0 {
        write_string(out, k)?;
        write_string(out, v)?;
    }
    Ok(())
}

fn write_dim(out: &mut Vec<u8>, d: &DimensionDefinition) -> Result<()> {
    write_string(out, &d.keyword)?;
    write_opt_str(out, &d.keyword_link)?;
    write_opt_str(out, &d.unit)?;
    write_opt_str(out, &d.unit_link)?;
    write_opt_str(out, &d.comment)?;
    write_opt_decimal(out, d.min)?;
    write_opt_decimal(out, d.max)?;
    out.extend_from_slice(&d.weight.to_bits().to_be_bytes());
    out.push(d.representation.code());
    match d.scale {
        None => out.push(0),
        Some(s) => out.extend_from_slice(&[1, s]),
    }
    match d.date_format {
        None => out.push(0),
        Some(f) => out.extend_from_slice(&[1, f.code()]),
    }
    out.push(d.required as u8);
    write_uint(out, d.enum_labels.len() as u64)?;
    for l in &d.enum_labels {
        write_labels(out, l)?;
    }
    Ok(())
}

pub fn canonical_bytes(def: &DomainDefinition) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_uint(&mut out, def.version)?;
    write_ul(&mut out, &def.ul, false)?;
    write_int(&mut out, def.created)?;
    write_labels(&mut out, &def.name)?;
    write_uint(&mut out, def.components.len() as u64)?;
    for c in &def.components {
        match c {
            SpaceComponent::Dim(d) => {
                out.push(0);
                write_dim(&mut out, d)?;
            }
            SpaceComponent::Nested { nested } => {
                out.push(1);
                write_ul(&mut out, &nested.space, false)?;
                match nested.version {
                    None => out.push(0),
                    Some(v) => {
                        out.push(1);
                        write_uint(&mut out, v)?;
                    }
                }
                write_string(&mut out, &nested.label)?;
            }
        }
    }
    Ok(out)
}

pub fn content_hash(def: &DomainDefinition) -> Result<ContentHash> {
    Ok(hash_bytes(&canonical_bytes(def)?))
}

pub(crate) fn hash_bytes(bytes: &[u8]) -> ContentHash {
    ContentHash(Sha256::digest(bytes).into())
}

fn flag(r: &mut Reader<'_>) -> Result<bool> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(CodecError::NonCanonical),
    }
}

fn read_opt_str(r: &mut Reader<'_>) -> Result<Option<String>> {
    Ok(if flag(r)? { Some(r.string()?) } else { None })
}

fn read_decimal(r: &mut Reader<'_>) -> Result<Decimal> {
    let m = r.int()?;
    Ok(Decimal::new(m, r.u8()?))
}

fn read_opt_decimal(r: &mut Reader<'_>) -> Result<Option<Decimal>> {
    Ok(if flag(r)? { Some(read_decimal(r)?) } else { None })
}

fn read_labels(r: &mut Reader<'_>) -> Result<LabelMap> {
    let n = r.uint()?;
    let mut m = LabelMap::default();
    let mut last: Option<String> = None;
    for _ in 0..n {
        let k = r.string()?;
        // keys must arrive strictly ascending for a unique byte form
        if last.as_ref().is_some_and(|l| *l >= k) {
            return Err(CodecError::NonCanonical);
        }
        let v = r.string()?;
        last = Some(k.clone());
        m.0.insert(k, v);
    }
    Ok(m)
}

fn read_dim(r: &mut Reader<'_>) -> Result<DimensionDefinition> {
    let keyword = r.string()?;
    let keyword_link = read_opt_str(r)?;
    let unit = read_opt_str(r)?;
    let unit_link = read_opt_str(r)?;
    let comment = read_opt_str(r)?;
    let min = read_opt_decimal(r)?;
    let max = read_opt_decimal(r)?;
    let raw: [u8; 8] = r.bytes(8)?.try_into().expect("8 bytes");
    let weight = f64::from_bits(u64::from_be_bytes(raw));
    let representation = Representation::from_code(r.u8()?).ok_or(CodecError::NonCanonical)?;
    let scale = if flag(r)? { Some(r.u8()?) } else { None };
    let date_format =
        if flag(r)? { Some(DateFormat::from_code(r.u8()?).ok_or(CodecError::NonCanonical)?) } else { None };
    let required = flag(r)?;
    let n = r.uint()?;
    let enum_labels = (0..n).map(|_| read_labels(r)).collect::<Result<Vec<_>>>()?;
    Ok(DimensionDefinition {
        keyword,
        keyword_link,
        unit,
        unit_link,
        comment,
        min,
        max,
        weight,
        representation,
        scale,
        date_format,
        required,
        enum_labels,
    })
}

pub(crate) fn read_definition(r: &mut Reader<'_>) -> Result<DomainDefinition> {
    let version = r.uint()?;
    let ul = read_ul(r, false)?;
    let created = r.int()?;
    let name = read_labels(r)?;
    let n = r.uint()?;
    let mut components = Vec::new();
    for _ in 0..n {
        components.push(match r.u8()? {
            0 => SpaceComponent::Dim(read_dim(r)?),
            1 => {
                let space = read_ul(r, false)?;
                let version = if flag(r)? { Some(r.uint()?) } else { None };
                let label = r.string()?;
                SpaceComponent::Nested { nested: NestedRef { space, version, label } }
            }
            _ => return Err(CodecError::NonCanonical),
        });
    }
    Ok(DomainDefinition { ul, version, name, components, created })
}

/// Inverse of [`canonical_bytes`]; rejects trailing bytes.
pub fn parse_canonical(bytes: &[u8]) -> Result<DomainDefinition> {
    let mut r = Reader::new(bytes);
    let def = read_definition(&mut r)?;
    if !r.is_empty() {
        return Err(CodecError::NonCanonical);
    }
    Ok(def)
}
