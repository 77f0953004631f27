//! Scalar values carried in Domain Vector slots.
//!
//! Every numeric slot is an exact fixed-scale decimal: integers, enumeration
//! indices and date/time counts use scale 0, money uses scale 2 and the two
//! floating representations use the scale declared on the dimension. Text is
//! passed through untouched and never takes part in distance computations.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest scale accepted anywhere; keeps `10^scale` exact in an `i64`.
pub const MAX_SCALE: u8 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("invalid decimal literal {0:?}")]
    InvalidLiteral(String),
    #[error("decimal {0} needs more than {1} fractional digits")]
    ScaleOverflow(String, u8),
    #[error("decimal magnitude out of range")]
    OutOfRange,
    #[error("invalid date/time {value:?} for format {format}")]
    InvalidDate { value: String, format: String },
    #[error("{0}")]
    Shape(String),
}

fn pow10(scale: u8) -> i128 {
    10i128.pow(scale as u32)
}

/// Exact fixed-scale decimal: `mantissa / 10^scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimal {
    pub mantissa: i64,
    pub scale: u8,
}

impl Decimal {
    pub const fn new(mantissa: i64, scale: u8) -> Self {
        Decimal { mantissa, scale }
    }

    pub const fn integer(v: i64) -> Self {
        Decimal { mantissa: v, scale: 0 }
    }

    pub fn to_f64(self) -> f64 {
        if self.scale == 0 {
            self.mantissa as f64
        } else {
            self.mantissa as f64 / 10f64.powi(self.scale as i32)
        }
    }

    /// Re-expresses the value at `scale`, failing if digits would be lost.
    pub fn rescale(self, scale: u8) -> Result<Decimal, ValueError> {
        if scale > MAX_SCALE {
            return Err(ValueError::OutOfRange);
        }
        match scale.cmp(&self.scale) {
            Ordering::Equal => Ok(self),
            Ordering::Greater => {
                let m = self.mantissa as i128 * pow10(scale - self.scale);
                let m = i64::try_from(m).map_err(|_| ValueError::OutOfRange)?;
                Ok(Decimal::new(m, scale))
            }
            Ordering::Less => {
                let div = pow10(self.scale - scale);
                let m = self.mantissa as i128;
                if m % div != 0 {
                    return Err(ValueError::ScaleOverflow(self.to_string(), scale));
                }
                Ok(Decimal::new((m / div) as i64, scale))
            }
        }
    }

    pub fn is_integral(self) -> bool {
        self.scale == 0 || self.mantissa as i128 % pow10(self.scale) == 0
    }

    pub fn from_f64(v: f64) -> Result<Decimal, ValueError> {
        if !v.is_finite() {
            return Err(ValueError::OutOfRange);
        }
        // Display for f64 is the shortest string that round-trips.
        format!("{v}").parse()
    }
}

impl Ord for Decimal {
    fn cmp(&self, other: &Self) -> Ordering {
        let s = self.scale.max(other.scale);
        let a = self.mantissa as i128 * pow10(s - self.scale);
        let b = other.mantissa as i128 * pow10(s - other.scale);
        a.cmp(&b)
    }
}

impl PartialOrd for Decimal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.mantissa);
        }
        let neg = self.mantissa < 0;
        let abs = (self.mantissa as i128).unsigned_abs();
        let div = pow10(self.scale) as u128;
        write!(
            f,
            "{}{}.{:0width$}",
            if neg { "-" } else { "" },
            abs / div,
            abs % div,
            width = self.scale as usize
        )
    }
}

impl FromStr for Decimal {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ValueError::InvalidLiteral(s.to_string());
        let t = s.trim();
        let (neg, body) = match t.as_bytes().first() {
            Some(b'-') => (true, &t[1..]),
            Some(b'+') => (false, &t[1..]),
            _ => (false, t),
        };
        if body.contains(['e', 'E']) {
            // exponent form, e.g. from f64 Display of tiny values
            let v: f64 = t.parse().map_err(|_| bad())?;
            let text = format!("{v:.18}");
            let d: Decimal = text.trim_end_matches('0').trim_end_matches('.').parse()?;
            return Ok(d);
        }
        let (int, frac) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if (int.is_empty() && frac.is_empty())
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        if frac.len() > MAX_SCALE as usize {
            return Err(ValueError::ScaleOverflow(s.to_string(), MAX_SCALE));
        }
        let digits = format!("{int}{frac}");
        let m: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| ValueError::OutOfRange)? };
        let m = if neg { -m } else { m };
        let m = i64::try_from(m).map_err(|_| ValueError::OutOfRange)?;
        Ok(Decimal::new(m, frac.len() as u8))
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.scale == 0 {
            s.serialize_i64(self.mantissa)
        } else {
            s.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        decimal_from_json(&v).map_err(D::Error::custom)
    }
}

/// Accepts JSON integers, JSON floats and decimal strings.
pub fn decimal_from_json(v: &serde_json::Value) -> Result<Decimal, ValueError> {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Decimal::integer(i))
            } else if let Some(f) = n.as_f64() {
                Decimal::from_f64(f)
            } else {
                Err(ValueError::OutOfRange)
            }
        }
        serde_json::Value::String(s) => s.parse(),
        other => Err(ValueError::InvalidLiteral(other.to_string())),
    }
}

/// One present value in a Domain Vector slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Number(Decimal),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(d) => Some(d.to_f64()),
            Scalar::Text(_) => None,
        }
    }

    pub fn as_decimal(&self) -> Option<Decimal> {
        match self {
            Scalar::Number(d) => Some(*d),
            Scalar::Text(_) => None,
        }
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Number(Decimal::integer(v))
    }
}

impl From<Decimal> for Scalar {
    fn from(v: Decimal) -> Self {
        Scalar::Number(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Text(v.to_string())
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(d) => d.fmt(f),
            Scalar::Text(t) => write!(f, "{t:?}"),
        }
    }
}
