//! Date/time dimensions store a signed count of the format's unit, measured
//! from 1970-01-01 00:00:00 (or from midnight for the time-of-day formats).

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::value::ValueError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DateFormat {
    #[serde(rename = "yyyy-mm-dd hh:mm:ss")]
    YmdHms,
    #[serde(rename = "yyyy-mm-dd hh:mm")]
    YmdHm,
    #[serde(rename = "yyyy-mm-dd hh")]
    YmdH,
    #[serde(rename = "yyyy-mm-dd")]
    Ymd,
    #[serde(rename = "yyyy-mm")]
    Ym,
    #[serde(rename = "yyyy")]
    Y,
    #[serde(rename = "hh:mm:ss")]
    Hms,
    #[serde(rename = "hh:mm")]
    Hm,
}

const EPOCH_YEAR: i64 = 1970;

impl DateFormat {
    pub const ALL: [DateFormat; 8] = [
        DateFormat::YmdHms,
        DateFormat::YmdHm,
        DateFormat::YmdH,
        DateFormat::Ymd,
        DateFormat::Ym,
        DateFormat::Y,
        DateFormat::Hms,
        DateFormat::Hm,
    ];

    pub fn pattern(self) -> &'static str {
        match self {
            DateFormat::YmdHms => "yyyy-mm-dd hh:mm:ss",
            DateFormat::YmdHm => "yyyy-mm-dd hh:mm",
            DateFormat::YmdH => "yyyy-mm-dd hh",
            DateFormat::Ymd => "yyyy-mm-dd",
            DateFormat::Ym => "yyyy-mm",
            DateFormat::Y => "yyyy",
            DateFormat::Hms => "hh:mm:ss",
            DateFormat::Hm => "hh:mm",
        }
    }

    pub(crate) fn code(self) -> u8 {
        Self::ALL.iter().position(|f| *f == self).expect("listed") as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    fn err(self, value: &str) -> ValueError {
        ValueError::InvalidDate { value: value.to_string(), format: self.pattern().to_string() }
    }

    /// Parses text in this format into the unit count.
    pub fn parse(self, text: &str) -> Result<i64, ValueError> {
        let err = || self.err(text);
        let t = text.trim();
        let (date, time) = match self {
            DateFormat::Hms | DateFormat::Hm => ("", t),
            DateFormat::Ymd | DateFormat::Ym | DateFormat::Y => (t, ""),
            _ => t.split_once(' ').ok_or_else(err)?,
        };
        let num = |s: &str| -> Result<i64, ValueError> {
            if s.is_empty() || !s.trim_start_matches('-').bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            s.parse().map_err(|_| err())
        };
        let tparts: Vec<i64> = if time.is_empty() {
            Vec::new()
        } else {
            time.split(':').map(num).collect::<Result<_, _>>()?
        };
        // leading '-' marks a negative year, so split from the right
        let dparts: Vec<i64> = if date.is_empty() {
            Vec::new()
        } else {
            let (neg, body) = match date.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, date),
            };
            let mut v: Vec<i64> = body.split('-').map(num).collect::<Result<_, _>>()?;
            if neg {
                v[0] = -v[0];
            }
            v
        };
        let expect = |d: usize, t: usize| {
            if dparts.len() == d && tparts.len() == t {
                Ok(())
            } else {
                Err(err())
            }
        };
        let hms = |h: i64, m: i64, s: i64| -> Result<i64, ValueError> {
            if !(0..24).contains(&h) || !(0..60).contains(&m) || !(0..60).contains(&s) {
                return Err(err());
            }
            Ok(h * 3600 + m * 60 + s)
        };
        let days = |y: i64, mo: i64, d: i64| -> Result<i64, ValueError> {
            let y = i32::try_from(y).map_err(|_| err())?;
            let date = NaiveDate::from_ymd_opt(y, mo as u32, d as u32).ok_or_else(err)?;
            let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid");
            Ok(date.signed_duration_since(epoch).num_days())
        };
        match self {
            DateFormat::YmdHms => {
                expect(3, 3)?;
                Ok(days(dparts[0], dparts[1], dparts[2])? * 86400 + hms(tparts[0], tparts[1], tparts[2])?)
            }
            DateFormat::YmdHm => {
                expect(3, 2)?;
                Ok(days(dparts[0], dparts[1], dparts[2])? * 1440 + hms(tparts[0], tparts[1], 0)? / 60)
            }
            DateFormat::YmdH => {
                expect(3, 1)?;
                Ok(days(dparts[0], dparts[1], dparts[2])? * 24 + hms(tparts[0], 0, 0)? / 3600)
            }
            DateFormat::Ymd => {
                expect(3, 0)?;
                days(dparts[0], dparts[1], dparts[2])
            }
            DateFormat::Ym => {
                expect(2, 0)?;
                if !(1..=12).contains(&dparts[1]) {
                    return Err(err());
                }
                Ok((dparts[0] - EPOCH_YEAR) * 12 + dparts[1] - 1)
            }
            DateFormat::Y => {
                expect(1, 0)?;
                Ok(dparts[0] - EPOCH_YEAR)
            }
            DateFormat::Hms => {
                expect(0, 3)?;
                hms(tparts[0], tparts[1], tparts[2])
            }
            DateFormat::Hm => {
                expect(0, 2)?;
                Ok(hms(tparts[0], tparts[1], 0)? / 60)
            }
        }
    }

    /// Formats a unit count; `None` when outside the calendar range.
    pub fn format(self, count: i64) -> Option<String> {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?;
        let date_of = |days: i64| epoch.checked_add_signed(chrono::TimeDelta::try_days(days)?);
        let ymd = |d: NaiveDate| format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day());
        Some(match self {
            DateFormat::YmdHms => {
                let (d, s) = (count.div_euclid(86400), count.rem_euclid(86400));
                format!("{} {:02}:{:02}:{:02}", ymd(date_of(d)?), s / 3600, s % 3600 / 60, s % 60)
            }
            DateFormat::YmdHm => {
                let (d, m) = (count.div_euclid(1440), count.rem_euclid(1440));
                format!("{} {:02}:{:02}", ymd(date_of(d)?), m / 60, m % 60)
            }
            DateFormat::YmdH => {
                let (d, h) = (count.div_euclid(24), count.rem_euclid(24));
                format!("{} {:02}", ymd(date_of(d)?), h)
            }
            DateFormat::Ymd => ymd(date_of(count)?),
            DateFormat::Ym => {
                let y = EPOCH_YEAR.checked_add(count.div_euclid(12))?;
                format!("{:04}-{:02}", y, count.rem_euclid(12) + 1)
            }
            DateFormat::Y => format!("{:04}", EPOCH_YEAR.checked_add(count)?),
            DateFormat::Hms => {
                if !(0..86400).contains(&count) {
                    return None;
                }
                format!("{:02}:{:02}:{:02}", count / 3600, count % 3600 / 60, count % 60)
            }
            DateFormat::Hm => {
                if !(0..1440).contains(&count) {
                    return None;
                }
                format!("{:02}:{:02}", count / 60, count % 60)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_counts() {
        assert_eq!(DateFormat::Ymd.parse("1970-01-02").unwrap(), 1);
        assert_eq!(DateFormat::Ymd.parse("1969-12-31").unwrap(), -1);
        assert_eq!(DateFormat::YmdHms.parse("2013-02-09 00:00:01").unwrap(), 1_360_368_001);
        assert_eq!(DateFormat::Ym.parse("1971-03").unwrap(), 14);
        assert_eq!(DateFormat::Y.parse("2013").unwrap(), 43);
        assert_eq!(DateFormat::Hm.parse("01:30").unwrap(), 90);
        assert_eq!(DateFormat::Hms.parse("00:01:05").unwrap(), 65);
        assert_eq!(DateFormat::YmdH.parse("1970-01-01 05").unwrap(), 5);
        assert_eq!(DateFormat::YmdHm.parse("1970-01-01 00:10").unwrap(), 10);
    }

    #[test]
    fn rejects_garbage() {
        assert!(DateFormat::Ymd.parse("2013-02-30").is_err());
        assert!(DateFormat::Ymd.parse("2013-02").is_err());
        assert!(DateFormat::Hm.parse("24:00").is_err());
        assert!(DateFormat::Ym.parse("2013-13").is_err());
        assert!(DateFormat::YmdHms.parse("2013-02-09").is_err());
    }

    #[test]
    fn format_inverts_parse() {
        for f in DateFormat::ALL {
            for c in [0i64, 1, 59, 1439, 12345] {
                if let Some(text) = f.format(c) {
                    assert_eq!(f.parse(&text).unwrap(), c, "{f:?} {text}");
                }
            }
        }
        assert_eq!(DateFormat::Ymd.format(-1).unwrap(), "1969-12-31");
        assert_eq!(DateFormat::Hm.format(2000), None);
    }
}
