use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use chrono::FixedOffset;
use exif::{In, Tag, Value};

use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::time::{offset_hours, UtcInstant};

pub const SIDECAR_HEADER: [&str; 5] =
    ["filename", "timestamp_utc", "exposure_s", "iso", "f_number"];

/// Validated camera settings for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exposure {
    pub exposure_time_s: f64,
    pub iso: f64,
    pub f_number: f64,
}

/// Exposure metadata as found in a file, any field possibly absent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExposureMetadata {
    pub timestamp: Option<UtcInstant>,
    pub exposure_time_s: Option<f64>,
    pub iso: Option<f64>,
    pub f_number: Option<f64>,
}

impl ExposureMetadata {
    /// Field-wise fallback: keeps `self`'s values, fills gaps from `other`.
    pub fn or(self, other: &ExposureMetadata) -> ExposureMetadata {
        ExposureMetadata {
            timestamp: self.timestamp.or(other.timestamp),
            exposure_time_s: self.exposure_time_s.or(other.exposure_time_s),
            iso: self.iso.or(other.iso),
            f_number: self.f_number.or(other.f_number),
        }
    }

    pub fn validate(&self) -> Result<(UtcInstant, Exposure)> {
        let missing = |field| Error::MissingMetadata { field, file: None };
        let positive = |v: Option<f64>, field| match v {
            Some(x) if x > 0.0 && x.is_finite() => Ok(x),
            _ => Err(missing(field)),
        };
        let timestamp = self.timestamp.ok_or_else(|| missing("timestamp"))?;
        Ok((
            timestamp,
            Exposure {
                exposure_time_s: positive(self.exposure_time_s, "exposure_time")?,
                iso: positive(self.iso, "iso")?,
                f_number: positive(self.f_number, "f_number")?,
            },
        ))
    }
}

/// Pulls exposure time, f-number, ISO and capture time out of embedded
/// EXIF. Containers without EXIF, or unreadable EXIF, yield an empty
/// record; missing fields are reported later by validation.
pub fn read_exif(bytes: &[u8], naive_offset: FixedOffset) -> ExposureMetadata {
    let Ok(exif) = exif::Reader::new().read_from_container(&mut Cursor::new(bytes)) else {
        return ExposureMetadata::default();
    };
    let rational = |tag| {
        exif.get_field(tag, In::PRIMARY)
            .and_then(|f| match &f.value {
                Value::Rational(v) => v.first().map(|r| r.to_f64()),
                _ => None,
            })
    };
    let iso = exif
        .get_field(Tag::PhotographicSensitivity, In::PRIMARY)
        .and_then(|f| f.value.get_uint(0))
        .map(f64::from);
    let ascii = |tag| {
        exif.get_field(tag, In::PRIMARY)
            .and_then(|f| match &f.value {
                Value::Ascii(v) => v.first().and_then(|s| std::str::from_utf8(s).ok()),
                _ => None,
            })
    };
    let offset = ascii(Tag::OffsetTimeOriginal)
        .and_then(parse_exif_offset)
        .unwrap_or(naive_offset);
    let timestamp = ascii(Tag::DateTimeOriginal)
        .or_else(|| ascii(Tag::DateTime))
        .and_then(|s| UtcInstant::parse_with_offset(s, offset).ok());
    ExposureMetadata {
        timestamp,
        exposure_time_s: rational(Tag::ExposureTime),
        iso,
        f_number: rational(Tag::FNumber),
    }
}

fn parse_exif_offset(s: &str) -> Option<FixedOffset> {
    let s = s.trim();
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1.0, &s[1..]),
        b'-' => (-1.0, &s[1..]),
        _ => return None,
    };
    let (h, m) = rest.split_once(':')?;
    let hours = h.parse::<u8>().ok()? as f64 + m.parse::<u8>().ok()? as f64 / 60.0;
    offset_hours(sign * hours).ok()
}

/// Fallback exposure metadata keyed by image file name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExifSidecar {
    entries: BTreeMap<String, ExposureMetadata>,
}

impl ExifSidecar {
    /// Parses `exif.csv`. Empty cells mean "unknown". Naive timestamps are
    /// read in `naive_offset`.
    pub fn parse<R: Read>(input: R, naive_offset: FixedOffset) -> Result<Self> {
        let rows = csvio::read_rows(input, &SIDECAR_HEADER)?;
        let mut entries = BTreeMap::new();
        for row in rows {
            let name = row.field(0).to_string();
            if name.is_empty() {
                return Err(Error::Parse {
                    line: row.line,
                    message: "empty filename".into(),
                });
            }
            let ts = row.field(1);
            let meta = ExposureMetadata {
                timestamp: if ts.is_empty() {
                    None
                } else {
                    Some(row.timestamp_in(1, naive_offset)?)
                },
                exposure_time_s: row.opt_f64(2, "exposure_s")?,
                iso: row.opt_f64(3, "iso")?,
                f_number: row.opt_f64(4, "f_number")?,
            };
            if entries.insert(name.clone(), meta).is_some() {
                return Err(Error::Parse {
                    line: row.line,
                    message: format!("duplicate filename {name:?}"),
                });
            }
        }
        Ok(ExifSidecar { entries })
    }

    pub fn insert(&mut self, filename: impl Into<String>, meta: ExposureMetadata) {
        self.entries.insert(filename.into(), meta);
    }

    pub fn get(&self, filename: &str) -> Option<&ExposureMetadata> {
        self.entries.get(filename)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let opt = |v: Option<f64>| v.map(csvio::fmt_f64).unwrap_or_default();
        let mut w = TableWriter::new(&SIDECAR_HEADER);
        for (name, m) in &self.entries {
            w.row([
                name.clone(),
                m.timestamp.map(|t| t.to_string()).unwrap_or_default(),
                opt(m.exposure_time_s),
                opt(m.iso),
                opt(m.f_number),
            ]);
        }
        w.into_bytes()
    }
}
