//! Bit-exact wire format for self-extending integers, Uniform Locators and
//! Domain Vectors.
//!
//! ## Self-extending integers
//!
//! A value is written in the smallest byte count `n` (1..=8) such that
//! `value < 32 * 256^(n-1)`. The top three bits of the first byte hold
//! `n - 1`; the low five bits of the first byte followed by the remaining
//! `n - 1` bytes hold the value big-endian.
//!
//! ```text
//!   n   first value needing n bytes
//!   1   0
//!   2   32
//!   3   8192
//!   4   2097152
//!   8   2^53 .. 2^61 - 1
//! ```
//!
//! Overlong encodings are rejected on decode so that every value has exactly
//! one byte string.
//!
//! ## Uniform Locators
//!
//! One tag byte (`0` same-as-before, `1` full URL, `2` numeric hierarchic,
//! `3` local table index) followed by the payload.
//!
//! ## Domain Vectors
//!
//! UL, then a presence bitmap of `ceil(slots / 8)` bytes (slot `j` present iff
//! bit `j % 8` of byte `j / 8` is set), then the present values in slot order.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DomainVector, Schema, WireKind};
use crate::value::{Decimal, Scalar};

/// Exclusive upper bound of self-extending integers: `32 * 256^7`.
pub const UINT_LIMIT: u64 = 1 << 61;

pub const TAG_SAME_AS_BEFORE: u8 = 0;
pub const TAG_FULL_URL: u8 = 1;
pub const TAG_NUMERIC_HIERARCHIC: u8 = 2;
pub const TAG_LOCAL_TABLE_INDEX: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("value {0} does not fit a self-extending integer (limit 2^61)")]
    ValueOutOfRange(u64),
    #[error("truncated input: need {needed} more byte(s)")]
    Truncated { needed: usize },
    #[error("non-canonical encoding")]
    NonCanonical,
    #[error("same-as-before locator without a preceding locator")]
    ContextMissing,
    #[error("unknown locator tag {0}")]
    UnknownTag(u8),
    #[error("invalid UTF-8 payload")]
    InvalidUtf8,
    #[error("full URL locator must not be empty")]
    EmptyUrl,
    #[error("numeric hierarchic locator must have at least one segment")]
    EmptyPath,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

/// Number of bytes the canonical encoding of `value` occupies.
pub fn uint_len(value: u64) -> Option<usize> {
    if value >= UINT_LIMIT {
        return None;
    }
    let mut n = 1;
    while value >= 32u64 << (8 * (n - 1)) {
        n += 1;
    }
    Some(n)
}

pub fn write_uint(out: &mut Vec<u8>, value: u64) -> Result<()> {
    let n = uint_len(value).ok_or(CodecError::ValueOutOfRange(value))?;
    let be = value.to_be_bytes();
    let tail = &be[8 - n..];
    out.push((((n - 1) as u8) << 5) | tail[0]);
    out.extend_from_slice(&tail[1..]);
    Ok(())
}

pub fn encode_uint(value: u64) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8);
    write_uint(&mut out, value)?;
    Ok(out)
}

/// Returns the value and the number of bytes consumed.
pub fn decode_uint(bytes: &[u8]) -> Result<(u64, usize)> {
    let first = *bytes.first().ok_or(CodecError::Truncated { needed: 1 })?;
    let n = (first >> 5) as usize + 1;
    if bytes.len() < n {
        return Err(CodecError::Truncated { needed: n - bytes.len() });
    }
    let mut value = (first & 0x1F) as u64;
    for b in &bytes[1..n] {
        value = (value << 8) | *b as u64;
    }
    if uint_len(value) != Some(n) {
        return Err(CodecError::NonCanonical);
    }
    Ok((value, n))
}

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(u: u64) -> i64 {
    ((u >> 1) as i64) ^ -((u & 1) as i64)
}

/// Cursor over an input buffer; every read checks the remaining length first.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn uint(&mut self) -> Result<u64> {
        let (v, n) = decode_uint(&self.buf[self.pos..])?;
        self.pos += n;
        Ok(v)
    }

    pub fn int(&mut self) -> Result<i64> {
        self.uint().map(unzigzag)
    }

    pub fn u8(&mut self) -> Result<u8> {
        let b = *self.buf.get(self.pos).ok_or(CodecError::Truncated { needed: 1 })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn bytes(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(CodecError::Truncated { needed: len - self.remaining() });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    /// Length-prefixed UTF-8 string.
    pub fn string(&mut self) -> Result<String> {
        let len = self.uint()?;
        let len = usize::try_from(len).map_err(|_| CodecError::Truncated { needed: usize::MAX })?;
        let raw = self.bytes(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CodecError::InvalidUtf8)
    }
}

pub fn write_int(out: &mut Vec<u8>, v: i64) -> Result<()> {
    write_uint(out, zigzag(v))
}

pub fn write_string(out: &mut Vec<u8>, s: &str) -> Result<()> {
    write_uint(out, s.len() as u64)?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Uniform Locator of a Domain Space definition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UlRef {
    FullUrl(String),
    NumericHierarchic(Vec<u64>),
    LocalTableIndex(u64),
    SameAsBefore,
}

impl UlRef {
    /// FullUrl and NumericHierarchic identify a space on their own; the other
    /// two forms need a local table or stream context.
    pub fn is_global(&self) -> bool {
        matches!(self, UlRef::FullUrl(_) | UlRef::NumericHierarchic(_))
    }

    fn tag(&self) -> u8 {
        match self {
            UlRef::SameAsBefore => TAG_SAME_AS_BEFORE,
            UlRef::FullUrl(_) => TAG_FULL_URL,
            UlRef::NumericHierarchic(_) => TAG_NUMERIC_HIERARCHIC,
            UlRef::LocalTableIndex(_) => TAG_LOCAL_TABLE_INDEX,
        }
    }
}

impl fmt::Display for UlRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UlRef::FullUrl(u) => f.write_str(u),
            UlRef::NumericHierarchic(p) => {
                f.write_str("ul:")?;
                for (i, s) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(".")?;
                    }
                    write!(f, "{s}")?;
                }
                Ok(())
            }
            UlRef::LocalTableIndex(i) => write!(f, "local:{i}"),
            UlRef::SameAsBefore => f.write_str("same-as-before"),
        }
    }
}

/// Inverse of `Display`. Text that is not one of the prefixed forms is a
/// full URL.
impl std::str::FromStr for UlRef {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(CodecError::EmptyUrl);
        }
        if s == "same-as-before" {
            return Ok(UlRef::SameAsBefore);
        }
        if let Some(i) = s.strip_prefix("local:") {
            return i.parse().map(UlRef::LocalTableIndex).map_err(|_| CodecError::NonCanonical);
        }
        if let Some(path) = s.strip_prefix("ul:") {
            let segs = path
                .split('.')
                .map(|p| p.parse::<u64>().ok().filter(|v| *v < UINT_LIMIT))
                .collect::<Option<Vec<_>>>()
                .ok_or(CodecError::NonCanonical)?;
            return Ok(UlRef::NumericHierarchic(segs));
        }
        Ok(UlRef::FullUrl(s.to_owned()))
    }
}

pub fn write_ul(out: &mut Vec<u8>, ul: &UlRef, has_previous: bool) -> Result<()> {
    out.push(ul.tag());
    match ul {
        UlRef::SameAsBefore => {
            if !has_previous {
                return Err(CodecError::ContextMissing);
            }
        }
        UlRef::FullUrl(url) => {
            if url.is_empty() {
                return Err(CodecError::EmptyUrl);
            }
            write_string(out, url)?;
        }
        UlRef::NumericHierarchic(path) => {
            if path.is_empty() {
                return Err(CodecError::EmptyPath);
            }
            write_uint(out, path.len() as u64)?;
            for seg in path {
                write_uint(out, *seg)?;
            }
        }
        UlRef::LocalTableIndex(i) => write_uint(out, *i)?,
    }
    Ok(())
}

pub fn encode_ul(ul: &UlRef, has_previous: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_ul(&mut out, ul, has_previous)?;
    Ok(out)
}

pub fn read_ul(r: &mut Reader<'_>, has_previous: bool) -> Result<UlRef> {
    match r.u8()? {
        TAG_SAME_AS_BEFORE => {
            if has_previous {
                Ok(UlRef::SameAsBefore)
            } else {
                Err(CodecError::ContextMissing)
            }
        }
        TAG_FULL_URL => {
            let url = r.string()?;
            if url.is_empty() {
                return Err(CodecError::EmptyUrl);
            }
            Ok(UlRef::FullUrl(url))
        }
        TAG_NUMERIC_HIERARCHIC => {
            let count = r.uint()?;
            if count == 0 {
                return Err(CodecError::EmptyPath);
            }
            // each segment takes at least one byte
            if count > r.remaining() as u64 {
                return Err(CodecError::Truncated { needed: (count - r.remaining() as u64) as usize });
            }
            let path = (0..count).map(|_| r.uint()).collect::<Result<Vec<_>>>()?;
            Ok(UlRef::NumericHierarchic(path))
        }
        TAG_LOCAL_TABLE_INDEX => Ok(UlRef::LocalTableIndex(r.uint()?)),
        t => Err(CodecError::UnknownTag(t)),
    }
}

pub fn decode_ul(bytes: &[u8], has_previous: bool) -> Result<(UlRef, usize)> {
    let mut r = Reader::new(bytes);
    let ul = read_ul(&mut r, has_previous)?;
    Ok((ul, r.position()))
}

fn mismatch(msg: impl Into<String>) -> CodecError {
    CodecError::SchemaMismatch(msg.into())
}

fn write_value(out: &mut Vec<u8>, slot: usize, kind: WireKind, v: &Scalar) -> Result<()> {
    match (kind, v) {
        (WireKind::Text, Scalar::Text(t)) => write_string(out, t),
        (WireKind::Index, Scalar::Number(d)) => {
            if d.scale != 0 || d.mantissa < 0 {
                return Err(mismatch(format!("slot {slot}: enumeration index must be a non-negative integer, got {d}")));
            }
            write_uint(out, d.mantissa as u64)
        }
        (WireKind::Signed { scale }, Scalar::Number(d)) => {
            if d.scale != scale {
                return Err(mismatch(format!("slot {slot}: expected scale {scale}, got {d}")));
            }
            write_int(out, d.mantissa)
        }
        (kind, v) => Err(mismatch(format!("slot {slot}: value {v} does not match {kind:?}"))),
    }
}

fn read_value(r: &mut Reader<'_>, kind: WireKind) -> Result<Scalar> {
    Ok(match kind {
        WireKind::Text => Scalar::Text(r.string()?),
        WireKind::Index => {
            let v = r.uint()?;
            Scalar::Number(Decimal::integer(v as i64))
        }
        WireKind::Signed { scale } => Scalar::Number(Decimal::new(r.int()?, scale)),
    })
}

pub fn write_dv(out: &mut Vec<u8>, dv: &DomainVector, schema: &Schema, has_previous: bool) -> Result<()> {
    let slots = schema.dims.len();
    if dv.values.len() != slots {
        return Err(mismatch(format!("vector has {} slots, schema has {slots}", dv.values.len())));
    }
    write_ul(out, &dv.space, has_previous)?;
    let mut bitmap = vec![0u8; slots.div_ceil(8)];
    for (j, v) in dv.values.iter().enumerate() {
        if v.is_some() {
            bitmap[j / 8] |= 1 << (j % 8);
        }
    }
    out.extend_from_slice(&bitmap);
    for (j, (v, dim)) in dv.values.iter().zip(&schema.dims).enumerate() {
        if let Some(v) = v {
            write_value(out, j, dim.def.wire_kind(), v)?;
        }
    }
    Ok(())
}

pub fn encode_dv(dv: &DomainVector, schema: &Schema, has_previous: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_dv(&mut out, dv, schema, has_previous)?;
    Ok(out)
}

pub fn read_dv(r: &mut Reader<'_>, schema: &Schema, has_previous: bool) -> Result<DomainVector> {
    let space = read_ul(r, has_previous)?;
    let slots = schema.dims.len();
    let bitmap = r.bytes(slots.div_ceil(8))?;
    if !slots.is_multiple_of(8) {
        let last = bitmap[bitmap.len() - 1];
        if last >> (slots % 8) != 0 {
            return Err(CodecError::NonCanonical);
        }
    }
    let mut values = Vec::with_capacity(slots);
    for (j, dim) in schema.dims.iter().enumerate() {
        if bitmap[j / 8] & (1 << (j % 8)) != 0 {
            values.push(Some(read_value(r, dim.def.wire_kind())?));
        } else {
            values.push(None);
        }
    }
    Ok(DomainVector { space, values })
}

/// Returns the decoded vector and the number of bytes consumed.
pub fn decode_dv(bytes: &[u8], schema: &Schema, has_previous: bool) -> Result<(DomainVector, usize)> {
    let mut r = Reader::new(bytes);
    let dv = read_dv(&mut r, schema, has_previous)?;
    Ok((dv, r.position()))
}

/// Writes a sequence of vectors, replacing a UL equal to the previous one by
/// the same-as-before tag.
#[derive(Debug, Default)]
pub struct DvStreamWriter {
    previous: Option<UlRef>,
    out: Vec<u8>,
}

impl DvStreamWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, dv: &DomainVector, schema: &Schema) -> Result<()> {
        if matches!(dv.space, UlRef::SameAsBefore) {
            return self.push_raw(dv, schema);
        }
        if self.previous.as_ref() == Some(&dv.space) {
            let compressed = DomainVector { space: UlRef::SameAsBefore, values: dv.values.clone() };
            write_dv(&mut self.out, &compressed, schema, true)
        } else {
            write_dv(&mut self.out, dv, schema, self.previous.is_some())?;
            self.previous = Some(dv.space.clone());
            Ok(())
        }
    }

    fn push_raw(&mut self, dv: &DomainVector, schema: &Schema) -> Result<()> {
        write_dv(&mut self.out, dv, schema, self.previous.is_some())
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out
    }
}

/// Reads a sequence of vectors, expanding same-as-before tags to the previous
/// concrete UL. The schema for each vector is chosen by the caller.
#[derive(Debug)]
pub struct DvStreamReader<'a> {
    reader: Reader<'a>,
    previous: Option<UlRef>,
}

impl<'a> DvStreamReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        DvStreamReader { reader: Reader::new(buf), previous: None }
    }

    pub fn is_empty(&self) -> bool {
        self.reader.is_empty()
    }

    pub fn position(&self) -> usize {
        self.reader.position()
    }

    /// Peeks the UL of the next vector (expanded) without consuming it.
    pub fn peek_space(&self) -> Result<UlRef> {
        let mut r = self.reader.clone();
        match read_ul(&mut r, self.previous.is_some())? {
            UlRef::SameAsBefore => Ok(self.previous.clone().expect("checked by read_ul")),
            ul => Ok(ul),
        }
    }

    pub fn next_dv(&mut self, schema: &Schema) -> Result<DomainVector> {
        let mut dv = read_dv(&mut self.reader, schema, self.previous.is_some())?;
        match dv.space {
            UlRef::SameAsBefore => dv.space = self.previous.clone().expect("checked by read_ul"),
            ref ul => self.previous = Some(ul.clone()),
        }
        Ok(dv)
    }
}
