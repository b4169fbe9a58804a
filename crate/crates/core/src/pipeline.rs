//! Luminance-difference series, windowed alignment onto MODIS overpass
//! times, and min-max normalization of the aligned pairs.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::clearsky::{clear_sky_luminance, ClearSkyRow, LinearMap};
use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::time::UtcInstant;

pub const ALIGNED_HEADER: [&str; 6] = [
    "timestamp_utc",
    "cot_mean",
    "lum_diff_mean",
    "n_samples",
    "cot_norm",
    "lum_norm",
];

/// Signed difference between measured and clear-sky luminance.
pub fn luminance_difference(l_actual: f64, l_clear: f64) -> f64 {
    l_actual - l_clear
}

/// `l_norm - clear_sky_luminance(g_c)` for every row.
pub fn difference_series(rows: &[ClearSkyRow], map: &LinearMap) -> Vec<(UtcInstant, f64)> {
    rows.iter()
        .map(|r| {
            (
                r.timestamp,
                luminance_difference(r.l_norm, clear_sky_luminance(r.g_c, map)),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowAnchor {
    /// `[T - w/2, T + w/2]`
    #[default]
    Centered,
    /// `[T - w, T]`
    Trailing,
    /// `[T, T + w]`
    Leading,
}

impl std::str::FromStr for WindowAnchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(WindowAnchor::Centered),
            "trailing" => Ok(WindowAnchor::Trailing),
            "leading" => Ok(WindowAnchor::Leading),
            _ => Err(Error::invalid(
                "window anchor",
                format!("{s:?} (expected centered, trailing or leading)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Min-max over the signed differences.
    #[default]
    Signed,
    /// Min-max over absolute differences.
    Absolute,
}

impl std::str::FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(NormalizationMode::Signed),
            "absolute" => Ok(NormalizationMode::Absolute),
            _ => Err(Error::invalid(
                "normalization mode",
                format!("{s:?} (expected signed or absolute)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub window_min: f64,
    pub anchor: WindowAnchor,
    pub min_samples: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            window_min: 15.0,
            anchor: WindowAnchor::Centered,
            min_samples: 3,
        }
    }
}

impl AlignOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_min > 0.0 && self.window_min.is_finite()) {
            return Err(Error::invalid(
                "window",
                format!("window_min must be positive, got {}", self.window_min),
            ));
        }
        if self.min_samples == 0 {
            return Err(Error::invalid("min_samples", "must be at least 1"));
        }
        Ok(())
    }

    /// Closed offsets `(lo, hi)` in seconds relative to the reference time.
    fn bounds(&self) -> (f64, f64) {
        let w = self.window_min * 60.0;
        match self.anchor {
            WindowAnchor::Centered => (-w / 2.0, w / 2.0),
            WindowAnchor::Trailing => (-w, 0.0),
            WindowAnchor::Leading => (0.0, w),
        }
    }
}

/// Camera samples averaged around one MODIS overpass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowedPair {
    pub timestamp: UtcInstant,
    pub cot_mean: f64,
    pub lum_diff_mean: f64,
    pub n_samples: usize,
}

/// One scatter point: a windowed pair plus both normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedPair {
    pub timestamp: UtcInstant,
    pub cot_mean: f64,
    pub lum_diff_mean: f64,
    pub n_samples: usize,
    pub cot_norm: f64,
    pub lum_norm: f64,
}

fn check_sorted(series: &[(UtcInstant, f64)], strict: bool, what: &str) -> Result<()> {
    for (i, w) in series.windows(2).enumerate() {
        let bad = if strict {
            w[1].0 <= w[0].0
        } else {
            w[1].0 < w[0].0
        };
        if bad {
            return Err(Error::Unsorted(format!(
                "{what} entry {} ({}) after {}",
                i + 1,
                w[1].0,
                w[0].0
            )));
        }
    }
    Ok(())
}

/// Averages the difference samples falling in each overpass window.
/// Overpasses with fewer than `min_samples` samples produce no pair.
pub fn align(
    diffs: &[(UtcInstant, f64)],
    cots: &[(UtcInstant, f64)],
    opts: &AlignOptions,
) -> Result<Vec<WindowedPair>> {
    opts.validate()?;
    check_sorted(diffs, false, "luminance difference")?;
    check_sorted(cots, true, "COT")?;
    let (lo, hi) = opts.bounds();

    let mut out = Vec::new();
    for &(t_ref, cot_mean) in cots {
        let lo_secs = lo.ceil() as i64;
        let first = diffs.partition_point(|(t, _)| t.seconds_since(t_ref) < lo_secs);
        let mut window: Vec<(UtcInstant, f64)> = diffs[first..]
            .iter()
            .take_while(|(t, _)| t.seconds_since(t_ref) as f64 <= hi)
            .filter(|(t, _)| t.seconds_since(t_ref) as f64 >= lo)
            .copied()
            .collect();
        if window.len() < opts.min_samples {
            continue;
        }
        // fixed summation order regardless of how ties arrived
        window.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let lum_diff_mean = window.iter().map(|w| w.1).sum::<f64>() / window.len() as f64;
        out.push(WindowedPair {
            timestamp: t_ref,
            cot_mean,
            lum_diff_mean,
            n_samples: window.len(),
        });
    }
    Ok(out)
}

/// Affine rescaling onto [0, 1] by the series extremes.
pub fn minmax_normalize(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    let span = hi - lo;
    Ok(xs
        .iter()
        .map(|&x| ((x - lo) / span).clamp(0.0, 1.0))
        .collect())
}

/// Normalizes COT and luminance difference across the whole aligned set.
pub fn normalize_pairs(
    pairs: &[WindowedPair],
    mode: NormalizationMode,
) -> Result<Vec<AlignedPair>> {
    let cot: Vec<f64> = pairs.iter().map(|p| p.cot_mean).collect();
    let lum: Vec<f64> = pairs
        .iter()
        .map(|p| match mode {
            NormalizationMode::Signed => p.lum_diff_mean,
            NormalizationMode::Absolute => p.lum_diff_mean.abs(),
        })
        .collect();
    let cot_norm = minmax_normalize(&cot)?;
    let lum_norm = minmax_normalize(&lum)?;
    Ok(pairs
        .iter()
        .zip(cot_norm.into_iter().zip(lum_norm))
        .map(|(p, (c, l))| AlignedPair {
            timestamp: p.timestamp,
            cot_mean: p.cot_mean,
            lum_diff_mean: p.lum_diff_mean,
            n_samples: p.n_samples,
            cot_norm: c,
            lum_norm: l,
        })
        .collect())
}

pub fn write_aligned_csv(pairs: &[AlignedPair]) -> Vec<u8> {
    let mut w = TableWriter::new(&ALIGNED_HEADER);
    for p in pairs {
        w.row([
            p.timestamp.to_string(),
            csvio::fmt_f64(p.cot_mean),
            csvio::fmt_f64(p.lum_diff_mean),
            p.n_samples.to_string(),
            csvio::fmt_f64(p.cot_norm),
            csvio::fmt_f64(p.lum_norm),
        ]);
    }
    w.into_bytes()
}

pub fn parse_aligned_csv<R: Read>(input: R) -> Result<Vec<AlignedPair>> {
    let mut out: Vec<AlignedPair> = Vec::new();
    for row in csvio::read_rows(input, &ALIGNED_HEADER)? {
        let p = AlignedPair {
            timestamp: row.timestamp(0)?,
            cot_mean: row.f64(1, "cot_mean")?,
            lum_diff_mean: row.f64(2, "lum_diff_mean")?,
            n_samples: row.u64(3, "n_samples")? as usize,
            cot_norm: row.f64(4, "cot_norm")?,
            lum_norm: row.f64(5, "lum_norm")?,
        };
        let unit = 0.0..=1.0;
        if !unit.contains(&p.cot_norm) || !unit.contains(&p.lum_norm) {
            return Err(Error::Parse {
                line: row.line,
                message: "normalized values must lie in [0, 1]".into(),
            });
        }
        if !(0.0..=100.0).contains(&p.cot_mean) {
            return Err(Error::CotRange {
                line: row.line,
                cell: "cot_mean".into(),
                value: p.cot_mean,
            });
        }
        if let Some(prev) = out.last() {
            if p.timestamp <= prev.timestamp {
                return Err(Error::Ordering {
                    line: row.line,
                    detail: format!("{} does not follow {}", p.timestamp, prev.timestamp),
                });
            }
        }
        out.push(p);
    }
    Ok(out)
}
