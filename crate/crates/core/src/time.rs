//! UTC timestamps at one-second resolution.
//!
//! Everything inside the pipeline is UTC. Inputs carrying an explicit offset
//! are converted on parse; inputs without one are read in the caller-supplied
//! zone (UTC unless the operator asked for site local time).

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, TimeDelta, TimeZone, Timelike, Utc};

pub use chrono::FixedOffset;

use crate::error::{Error, Result};

const OUTPUT_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UtcInstant(DateTime<Utc>);

impl UtcInstant {
    pub fn from_ymd_hms(year: i32, month: u32, day: u32, h: u32, m: u32, s: u32) -> Result<Self> {
        let naive = NaiveDate::from_ymd_opt(year, month, day)
            .and_then(|d| d.and_hms_opt(h, m, s))
            .ok_or_else(|| {
                Error::invalid(
                    "timestamp",
                    format!("{year:04}-{month:02}-{day:02} {h:02}:{m:02}:{s:02}"),
                )
            })?;
        Ok(UtcInstant(Utc.from_utc_datetime(&naive)))
    }

    pub fn from_unix_seconds(secs: i64) -> Result<Self> {
        DateTime::from_timestamp(secs, 0)
            .map(UtcInstant)
            .ok_or_else(|| Error::invalid("timestamp", format!("unix seconds {secs}")))
    }

    /// Parses an ISO-8601 timestamp. Strings carrying `Z` or an explicit
    /// offset are converted to UTC; strings without one are interpreted in
    /// `naive_offset`.
    pub fn parse_with_offset(s: &str, naive_offset: FixedOffset) -> Result<Self> {
        let s = s.trim();
        let bad = |why: &str| Error::invalid("timestamp", format!("{s:?}: {why}"));
        let dt = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            dt.with_timezone(&Utc)
        } else {
            let naive = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
                .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
                .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y:%m:%d %H:%M:%S"))
                .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f"))
                .map_err(|_| bad("expected ISO-8601 date-time"))?;
            naive_offset
                .from_local_datetime(&naive)
                .single()
                .ok_or_else(|| bad("unrepresentable local time"))?
                .with_timezone(&Utc)
        };
        if dt.nanosecond() != 0 {
            return Err(bad("sub-second precision is not supported"));
        }
        Ok(UtcInstant(dt))
    }

    pub fn unix_seconds(self) -> i64 {
        self.0.timestamp()
    }

    pub fn year(self) -> i32 {
        self.0.year()
    }

    pub fn day_of_year(self) -> u32 {
        self.0.ordinal()
    }

    /// Seconds elapsed since 00:00 UTC of the same day.
    pub fn seconds_of_day(self) -> u32 {
        self.0.num_seconds_from_midnight()
    }

    pub fn as_datetime(self) -> DateTime<Utc> {
        self.0
    }

    pub fn add_seconds(self, secs: i64) -> Self {
        UtcInstant(self.0 + TimeDelta::seconds(secs))
    }

    /// `self - other` in whole seconds.
    pub fn seconds_since(self, other: UtcInstant) -> i64 {
        self.unix_seconds() - other.unix_seconds()
    }
}

impl From<DateTime<Utc>> for UtcInstant {
    fn from(dt: DateTime<Utc>) -> Self {
        UtcInstant(dt.with_nanosecond(0).unwrap_or(dt))
    }
}

impl FromStr for UtcInstant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UtcInstant::parse_with_offset(s, utc_offset())
    }
}

impl fmt::Display for UtcInstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(OUTPUT_FORMAT))
    }
}

pub fn utc_offset() -> FixedOffset {
    FixedOffset::east_opt(0).expect("zero offset")
}

/// Fixed offset east of UTC, in hours. Fractional hours are allowed
/// (to the minute).
pub fn offset_hours(hours: f64) -> Result<FixedOffset> {
    if !hours.is_finite() {
        return Err(Error::invalid("utc offset", hours.to_string()));
    }
    let secs = (hours * 3600.0).round() as i32;
    FixedOffset::east_opt(secs).ok_or_else(|| Error::invalid("utc offset", hours.to_string()))
}
