//! Clear-sky irradiance model and the linear irradiance-to-luminance map
//! that turns it into a per-frame luminance baseline.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::geometry::{solar_position, GeoLocation, SolarPosition};
use crate::imaging::LuminanceSample;
use crate::stats::Moments;
use crate::time::UtcInstant;

pub const CLEARSKY_HEADER: [&str; 4] = ["timestamp_utc", "l_norm", "g_c", "is_clear"];
pub const MAP_HEADER: [&str; 4] = ["m", "q", "r2", "n"];
pub const FLAGS_HEADER: [&str; 2] = ["timestamp_utc", "is_clear"];

/// Coefficients of `E0 * eps * a * cos(z)^b * exp(c * (90 - elevation))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ClearSkyParams {
    a: f64,
    b: f64,
    c: f64,
    e0_wm2: f64,
}

impl ClearSkyParams {
    pub const DEFAULT_A: f64 = 0.8277;
    pub const DEFAULT_B: f64 = 1.3644;
    pub const DEFAULT_C: f64 = -0.0013;
    pub const DEFAULT_E0: f64 = 1361.1;

    pub fn new(a: f64, b: f64, c: f64, e0_wm2: f64) -> Result<Self> {
        let bad = |d: String| Err(Error::invalid("clear-sky parameters", d));
        if !(a > 0.0 && a.is_finite()) {
            return bad(format!("a must be > 0, got {a}"));
        }
        if !(b > 0.0 && b.is_finite()) {
            return bad(format!("b must be > 0, got {b}"));
        }
        if !(c <= 0.0 && c.is_finite()) {
            return bad(format!("c must be <= 0, got {c}"));
        }
        if !(e0_wm2 > 0.0 && e0_wm2.is_finite()) {
            return bad(format!("e0_wm2 must be > 0, got {e0_wm2}"));
        }
        Ok(ClearSkyParams { a, b, c, e0_wm2 })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn e0_wm2(&self) -> f64 {
        self.e0_wm2
    }
}

impl Default for ClearSkyParams {
    fn default() -> Self {
        ClearSkyParams {
            a: Self::DEFAULT_A,
            b: Self::DEFAULT_B,
            c: Self::DEFAULT_C,
            e0_wm2: Self::DEFAULT_E0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    a: f64,
    b: f64,
    c: f64,
    e0_wm2: f64,
}

impl TryFrom<ParamsRepr> for ClearSkyParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        ClearSkyParams::new(r.a, r.b, r.c, r.e0_wm2)
    }
}

impl From<ClearSkyParams> for ParamsRepr {
    fn from(p: ClearSkyParams) -> Self {
        ParamsRepr {
            a: p.a,
            b: p.b,
            c: p.c,
            e0_wm2: p.e0_wm2,
        }
    }
}

/// Earth-Sun distance factor `1 + 0.033 cos(2 pi d / 365)`.
pub fn eccentricity_correction(day_of_year: u32) -> Result<f64> {
    if !(1..=366).contains(&day_of_year) {
        return Err(Error::invalid(
            "day of year",
            format!("{day_of_year} not in 1..=366"),
        ));
    }
    Ok(1.0 + 0.033 * (2.0 * PI * day_of_year as f64 / 365.0).cos())
}

/// Clear-sky global horizontal irradiance in W/m^2; zero with the sun at or
/// below the horizon.
pub fn clear_sky_irradiance(
    sp: &SolarPosition,
    p: &ClearSkyParams,
    day_of_year: u32,
) -> Result<f64> {
    let eps = eccentricity_correction(day_of_year)?;
    let elevation = sp.elevation_deg();
    if elevation <= 0.0 {
        return Ok(0.0);
    }
    let cos_z = sp.zenith_deg.to_radians().cos().max(0.0);
    Ok(p.e0_wm2 * eps * p.a * cos_z.powf(p.b) * (p.c * (90.0 - elevation)).exp())
}

/// Fitted map from clear-sky irradiance to image luminance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMap {
    pub slope: f64,
    pub intercept: f64,
    pub fit_r2: f64,
    pub n: usize,
}

/// Least-squares fit of `l_norm` on `g_c`. With `with_intercept` false the
/// line is forced through the origin and r^2 is the uncentered one.
pub fn fit_linear_map(pairs: &[(f64, f64)], with_intercept: bool) -> Result<LinearMap> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: pairs.len(),
        });
    }
    let g: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let l: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    if g.iter().all(|&x| x == g[0]) {
        return Err(Error::SingularFit);
    }

    let (slope, intercept) = if with_intercept {
        let m = Moments::new(&g, &l)?;
        (m.slope(), m.intercept())
    } else {
        let sxy: f64 = g.iter().zip(&l).map(|(x, y)| x * y).sum();
        let sxx: f64 = g.iter().map(|x| x * x).sum();
        (sxy / sxx, 0.0)
    };
    let sse: f64 = g
        .iter()
        .zip(&l)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let sst: f64 = if with_intercept {
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        l.iter().map(|y| (y - mean).powi(2)).sum()
    } else {
        l.iter().map(|y| y * y).sum()
    };
    let fit_r2 = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(LinearMap {
        slope,
        intercept,
        fit_r2,
        n: pairs.len(),
    })
}

/// Baseline luminance for irradiance `g_c`, clamped at zero.
pub fn clear_sky_luminance(g_c: f64, map: &LinearMap) -> f64 {
    (map.slope * g_c + map.intercept).max(0.0)
}

/// One luminance sample joined with its modeled clear-sky irradiance and
/// the operator's clear-sky label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearSkyRow {
    pub timestamp: UtcInstant,
    pub l_norm: f64,
    pub g_c: f64,
    pub is_clear: bool,
}

/// Computes `g_c` for every sample and attaches the clear flag for its
/// timestamp (unlabeled samples are not clear).
pub fn annotate(
    samples: &[LuminanceSample],
    flags: &BTreeMap<UtcInstant, bool>,
    loc: &GeoLocation,
    params: &ClearSkyParams,
) -> Result<Vec<ClearSkyRow>> {
    samples
        .iter()
        .map(|s| {
            let sp = solar_position(s.timestamp, loc)?;
            Ok(ClearSkyRow {
                timestamp: s.timestamp,
                l_norm: s.l_norm,
                g_c: clear_sky_irradiance(&sp, params, s.timestamp.day_of_year())?,
                is_clear: flags.get(&s.timestamp).copied().unwrap_or(false),
            })
        })
        .collect()
}

/// Fits the map on the clear-labeled rows.
pub fn fit_from_rows(rows: &[ClearSkyRow], with_intercept: bool) -> Result<LinearMap> {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.is_clear)
        .map(|r| (r.g_c, r.l_norm))
        .collect();
    fit_linear_map(&pairs, with_intercept)
}

pub fn parse_clear_flags<R: Read>(input: R) -> Result<BTreeMap<UtcInstant, bool>> {
    let mut out = BTreeMap::new();
    for row in csvio::read_rows(input, &FLAGS_HEADER)? {
        let t = row.timestamp(0)?;
        if out.insert(t, row.flag(1, "is_clear")?).is_some() {
            return Err(Error::Parse {
                line: row.line,
                message: format!("duplicate timestamp {t}"),
            });
        }
    }
    Ok(out)
}

pub fn write_clear_flags(flags: &BTreeMap<UtcInstant, bool>) -> Vec<u8> {
    let mut w = TableWriter::new(&FLAGS_HEADER);
    for (t, &c) in flags {
        w.row([t.to_string(), u8::from(c).to_string()]);
    }
    w.into_bytes()
}

pub fn write_clearsky_csv(rows: &[ClearSkyRow]) -> Vec<u8> {
    let mut w = TableWriter::new(&CLEARSKY_HEADER);
    for r in rows {
        w.row([
            r.timestamp.to_string(),
            csvio::fmt_f64(r.l_norm),
            csvio::fmt_f64(r.g_c),
            u8::from(r.is_clear).to_string(),
        ]);
    }
    w.into_bytes()
}

pub fn parse_clearsky_csv<R: Read>(input: R) -> Result<Vec<ClearSkyRow>> {
    let mut out: Vec<ClearSkyRow> = Vec::new();
    for row in csvio::read_rows(input, &CLEARSKY_HEADER)? {
        let r = ClearSkyRow {
            timestamp: row.timestamp(0)?,
            l_norm: row.f64(1, "l_norm")?,
            g_c: row.f64(2, "g_c")?,
            is_clear: row.flag(3, "is_clear")?,
        };
        if r.g_c < 0.0 || r.l_norm < 0.0 {
            return Err(Error::Parse {
                line: row.line,
                message: "l_norm and g_c must be non-negative".into(),
            });
        }
        if let Some(prev) = out.last() {
            if r.timestamp < prev.timestamp {
                return Err(Error::Ordering {
                    line: row.line,
                    detail: format!("{} after {}", r.timestamp, prev.timestamp),
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_map_csv(map: &LinearMap) -> Vec<u8> {
    let mut w = TableWriter::new(&MAP_HEADER);
    w.row([
        csvio::fmt_f64(map.slope),
        csvio::fmt_f64(map.intercept),
        csvio::fmt_f64(map.fit_r2),
        map.n.to_string(),
    ]);
    w.into_bytes()
}

pub fn parse_map_csv<R: Read>(input: R) -> Result<LinearMap> {
    let rows = csvio::read_rows(input, &MAP_HEADER)?;
    let [row] = rows.as_slice() else {
        return Err(Error::Parse {
            line: rows.get(1).map(|r| r.line).unwrap_or(1),
            message: format!("expected exactly one map row, found {}", rows.len()),
        });
    };
    let map = LinearMap {
        slope: row.f64(0, "m")?,
        intercept: row.f64(1, "q")?,
        fit_r2: row.f64(2, "r2")?,
        n: row.u64(3, "n")? as usize,
    };
    if map.n < 2 || !(0.0..=1.0).contains(&map.fit_r2) {
        return Err(Error::Parse {
            line: row.line,
            message: "map needs n >= 2 and r2 in [0, 1]".into(),
        });
    }
    Ok(map)
}
