//! Synthetic end-to-end dataset with a planted COT -> luminance-difference
//! relation.
//!
//! Each overpass gets a 3x3 COT grid and a block of two-minute frames around
//! it. A frame is a uniform dark sky with a uniform gray disk centered on the
//! projected sun. The disk gray level is chosen first; the exposure time is
//! then solved from the exposure equation so that the pipeline reads back
//! exactly the planted normalized luminance
//!
//! ```text
//! l_norm = m * g_c + q + planted_slope * cot_mean / 100
//! ```
//!
//! where `g_c` is the clear-sky irradiance at the frame's solar position.
//! Every fifth overpass (by default) is cloud-free and its frames are labeled
//! clear so the linear map can be fitted.

use std::collections::BTreeMap;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clearsky::{clear_sky_irradiance, write_clear_flags};
use crate::config::PipelineConfig;
use crate::cot::{write_cot_csv, CotGrid, COT_MAX};
use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::geometry::{solar_position, sun_pixel, SunPixel};
use crate::imaging::{relative_luminance, ExifSidecar, ExposureMetadata};
use crate::time::UtcInstant;

pub const TRUTH_HEADER: [&str; 3] = ["timestamp_utc", "true_l_norm", "true_lum_diff"];

pub const IMAGES_DIR: &str = "images";
pub const SIDECAR_FILE: &str = "exif.csv";
pub const COT_FILE: &str = "cot.csv";
pub const FLAGS_FILE: &str = "clear_flags.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CONFIG_FILE: &str = "heliocot.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub year: i32,
    pub first_day: u32,
    pub day_step: u32,
    pub days: u32,
    pub overpass_hours_utc: Vec<u32>,
    /// Overpass minute drawn uniformly from `0..=overpass_jitter_min`.
    pub overpass_jitter_min: u32,
    pub frame_interval_min: u32,
    /// Frames cover `[T - span, T + span]` on the frame-interval grid.
    pub frame_half_span_min: u32,
    pub map_slope: f64,
    pub map_intercept: f64,
    /// Luminance difference per unit of COT / 100.
    pub planted_slope: f64,
    /// When set, every overpass uses this COT in all nine cells.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_cot: Option<f64>,
    /// Every n-th overpass is cloud-free (0 disables).
    pub clear_every: u32,
    pub cell_spread: f64,
    pub fill_probability: f64,
    pub all_fill_overpasses: u32,
    pub disk_gray_min: u8,
    pub disk_gray_max: u8,
    pub background_gray: u8,
    /// Rendered disk radius relative to the circumsolar averaging radius.
    pub disk_radius_scale: f64,
    /// Gaussian pixel noise, in 8-bit counts; 0 disables.
    pub noise_sigma: f64,
    pub iso: f64,
    pub f_number: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            year: 2015,
            first_day: 1,
            day_step: 12,
            days: 30,
            overpass_hours_utc: vec![4, 7],
            overpass_jitter_min: 30,
            frame_interval_min: 2,
            frame_half_span_min: 19,
            map_slope: 25.0,
            map_intercept: 1000.0,
            planted_slope: -15_000.0,
            constant_cot: None,
            clear_every: 5,
            cell_spread: 5.0,
            fill_probability: 0.05,
            all_fill_overpasses: 1,
            disk_gray_min: 150,
            disk_gray_max: 220,
            background_gray: 40,
            disk_radius_scale: 1.5,
            noise_sigma: 0.0,
            iso: 100.0,
            f_number: 8.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.days == 0 || self.day_step == 0 || self.first_day == 0 {
            return fail("days, day_step and first_day must be positive");
        }
        if self.overpass_hours_utc.is_empty() || self.overpass_hours_utc.iter().any(|&h| h > 23) {
            return fail("overpass_hours_utc must list hours in 0..=23");
        }
        if self.frame_interval_min == 0 || 60 % self.frame_interval_min != 0 {
            return fail("frame_interval_min must divide 60");
        }
        if self.overpass_jitter_min > 59 {
            return fail("overpass_jitter_min must be below 60");
        }
        if let Some(c) = self.constant_cot {
            if !(0.0..=COT_MAX).contains(&c) {
                return fail("constant_cot must lie in [0, 100]");
            }
        }
        if !(0.0..=1.0).contains(&self.fill_probability) {
            return fail("fill_probability must lie in [0, 1]");
        }
        if !(self.cell_spread >= 0.0 && self.noise_sigma >= 0.0) {
            return fail("cell_spread and noise_sigma must be non-negative");
        }
        if self.disk_gray_min == 0
            || self.disk_gray_min > self.disk_gray_max
            || self.disk_gray_max == 255
        {
            return fail("disk gray range must lie inside 1..=254");
        }
        if self.disk_radius_scale < 1.0 {
            return fail("disk_radius_scale must be at least 1");
        }
        if !(self.iso > 0.0 && self.f_number > 0.0) {
            return fail("iso and f_number must be positive");
        }
        if ![self.map_slope, self.map_intercept, self.planted_slope]
            .iter()
            .all(|v| v.is_finite())
        {
            return fail("planted coefficients must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTruth {
    pub timestamp: UtcInstant,
    pub overpass: usize,
    pub g_c: f64,
    pub true_l_norm: f64,
    pub true_lum_diff: f64,
    pub is_clear: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overpass {
    pub grid: CotGrid,
    /// Mean over valid cells; `None` for all-fill grids.
    pub cot_mean: Option<f64>,
    /// COT the frames were rendered with.
    pub rendered_cot: f64,
    pub is_clear: bool,
}

/// Everything planted into a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub seed: u64,
    pub config: PipelineConfig,
    pub overpasses: Vec<Overpass>,
    pub frames: Vec<FrameTruth>,
}

impl SynthTruth {
    pub fn synth(&self) -> &SynthConfig {
        self.config
            .synth
            .as_ref()
            .expect("truth always carries its synth config")
    }

    /// Planted Δl per unit of raw COT.
    pub fn slope_per_cot(&self) -> f64 {
        self.synth().planted_slope / COT_MAX
    }
}

fn frame_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step, keeps per-frame streams decorrelated
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Plans the schedule and per-frame truth without rendering anything.
pub fn plan(config: &PipelineConfig, seed: u64) -> Result<SynthTruth> {
    let sc = config.synth.clone().unwrap_or_default();
    sc.validate()?;
    let mut cfg = config.clone();
    cfg.synth = Some(sc.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = UtcInstant::from_ymd_hms(sc.year, 1, 1, 0, 0, 0)?;

    let n_overpasses = sc.days as usize * sc.overpass_hours_utc.len();
    let mut times = Vec::with_capacity(n_overpasses);
    for d in 0..sc.days {
        let day_start = start.add_seconds(((sc.first_day - 1 + d * sc.day_step) as i64) * 86_400);
        for &h in &sc.overpass_hours_utc {
            let minute = rng.random_range(0..=sc.overpass_jitter_min);
            times.push(day_start.add_seconds(h as i64 * 3600 + minute as i64 * 60));
        }
    }
    times.sort();
    if times.iter().any(|t| t.year() != sc.year) {
        return Err(Error::Config(
            "synth: schedule runs past the end of the year".into(),
        ));
    }

    let is_clear_at = |i: usize| match sc.constant_cot {
        Some(c) => c == 0.0,
        None => sc.clear_every > 0 && i.is_multiple_of(sc.clear_every as usize),
    };
    let cloudy: Vec<usize> = (0..n_overpasses).filter(|&i| !is_clear_at(i)).collect();
    let mut all_fill = Vec::new();
    if sc.constant_cot.is_none() {
        let mut pool = cloudy.clone();
        for _ in 0..sc.all_fill_overpasses.min(pool.len() as u32) {
            let k = rng.random_range(0..pool.len());
            all_fill.push(pool.swap_remove(k));
        }
    }

    let mut overpasses = Vec::with_capacity(n_overpasses);
    for (i, &t) in times.iter().enumerate() {
        let clear = is_clear_at(i);
        let base = match sc.constant_cot {
            Some(c) => c,
            None if clear => 0.0,
            None => rng.random_range(0.0..=COT_MAX),
        };
        let mut cells = [None; 9];
        if !all_fill.contains(&i) {
            for cell in cells.iter_mut() {
                let fill =
                    !clear && sc.constant_cot.is_none() && rng.random_bool(sc.fill_probability);
                let jitter = if clear || sc.constant_cot.is_some() || sc.cell_spread == 0.0 {
                    0.0
                } else {
                    rng.random_range(-sc.cell_spread..=sc.cell_spread)
                };
                if !fill {
                    *cell = Some((base + jitter).clamp(0.0, COT_MAX));
                }
            }
            if cells.iter().all(Option::is_none) {
                cells[4] = Some(base);
            }
        }
        let valid: Vec<f64> = cells.iter().flatten().copied().collect();
        let cot_mean = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
        overpasses.push(Overpass {
            grid: CotGrid::new(t, cells)?,
            cot_mean,
            rendered_cot: cot_mean.unwrap_or(base),
            is_clear: clear,
        });
    }

    let step = sc.frame_interval_min as i64 * 60;
    let span = sc.frame_half_span_min as i64 * 60;
    let mut frames = Vec::new();
    for (i, op) in overpasses.iter().enumerate() {
        let t_ref = op.grid.timestamp.unix_seconds();
        let first = (t_ref - span).div_euclid(step) * step;
        let mut secs = if first < t_ref - span {
            first + step
        } else {
            first
        };
        while secs <= t_ref + span {
            let t = UtcInstant::from_unix_seconds(secs)?;
            let sp = solar_position(t, &cfg.site)?;
            if !sp.is_above_horizon() {
                return Err(Error::Config(format!(
                    "synth: sun below the horizon at {t}; move the overpass hours"
                )));
            }
            let g_c = clear_sky_irradiance(&sp, &cfg.clear_sky, t.day_of_year())?;
            let true_lum_diff = sc.planted_slope * op.rendered_cot / COT_MAX;
            let true_l_norm = sc.map_slope * g_c + sc.map_intercept + true_lum_diff;
            if true_l_norm <= 0.0 || true_l_norm.is_nan() {
                return Err(Error::Config(format!(
                    "synth: planted luminance {true_l_norm} at {t} is not positive"
                )));
            }
            frames.push(FrameTruth {
                timestamp: t,
                overpass: i,
                g_c,
                true_l_norm,
                true_lum_diff,
                is_clear: op.is_clear,
            });
            secs += step;
        }
    }
    for w in frames.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(Error::Config(
                "synth: frame blocks of adjacent overpasses overlap".into(),
            ));
        }
    }
    Ok(SynthTruth {
        seed,
        config: cfg,
        overpasses,
        frames,
    })
}

/// Renders one frame. Returns the image and its exposure time.
pub fn render_frame(truth: &SynthTruth, index: usize) -> Result<(RgbImage, f64)> {
    let sc = truth.synth();
    let cfg = &truth.config;
    let frame = &truth.frames[index];
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(truth.seed, index as u64));
    let gray: u8 = rng.random_range(sc.disk_gray_min..=sc.disk_gray_max);
    let y = relative_luminance(gray, gray, gray);
    let exposure_time_s = y * sc.f_number * sc.f_number * 100.0 / (frame.true_l_norm * sc.iso);

    let sp = solar_position(frame.timestamp, &cfg.site)?;
    let (sx, sy) = match sun_pixel(&sp, &cfg.camera)? {
        SunPixel::Visible { x, y } => (x, y),
        SunPixel::BelowHorizon => {
            return Err(Error::Config(format!(
                "synth: sun below horizon at {}",
                frame.timestamp
            )))
        }
    };
    let (w, h) = (cfg.camera.width(), cfg.camera.height());
    let bg = sc.background_gray;
    let mut img = RgbImage::from_pixel(w, h, Rgb([bg, bg, bg]));
    let r = cfg.circumsolar_radius_px() as f64 * sc.disk_radius_scale;
    let r2 = r * r;
    let row_lo = (sy - r - 1.0).floor().max(0.0) as u32;
    let row_hi = ((sy + r + 1.0).ceil().max(0.0) as u32).min(h - 1);
    let col_lo = (sx - r - 1.0).floor().max(0.0) as u32;
    let col_hi = ((sx + r + 1.0).ceil().max(0.0) as u32).min(w - 1);
    for row in row_lo..=row_hi {
        let dy = row as f64 + 0.5 - sy;
        for col in col_lo..=col_hi {
            let dx = col as f64 + 0.5 - sx;
            if dx * dx + dy * dy <= r2 {
                img.put_pixel(col, row, Rgb([gray, gray, gray]));
            }
        }
    }
    if sc.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, sc.noise_sigma)
            .map_err(|e| Error::Config(format!("synth noise: {e}")))?;
        for px in img.pixels_mut() {
            for c in px.0.iter_mut() {
                let v = *c as f64 + normal.sample(&mut rng);
                *c = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok((img, exposure_time_s))
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: "<png encoder>".into(),
            source,
        })?;
    Ok(out)
}

pub fn write_truth_csv(frames: &[FrameTruth]) -> Vec<u8> {
    let mut w = TableWriter::new(&TRUTH_HEADER);
    for f in frames {
        w.row([
            f.timestamp.to_string(),
            csvio::fmt_f64(f.true_l_norm),
            csvio::fmt_f64(f.true_lum_diff),
        ]);
    }
    w.into_bytes()
}

/// `(timestamp, true_l_norm, true_lum_diff)` rows of `truth.csv`.
pub fn parse_truth_csv<R: std::io::Read>(input: R) -> Result<Vec<(UtcInstant, f64, f64)>> {
    csvio::read_rows(input, &TRUTH_HEADER)?
        .iter()
        .map(|r| {
            Ok((
                r.timestamp(0)?,
                r.f64(1, "true_l_norm")?,
                r.f64(2, "true_lum_diff")?,
            ))
        })
        .collect()
}

/// Writes the full dataset under `out_dir`:
///
/// ```text
/// images/frame_NNNNN.png   rendered sky frames
/// images/exif.csv          exposure sidecar
/// cot.csv                  3x3 COT grids per overpass
/// clear_flags.csv          operator clear-sky labels per frame
/// truth.csv                planted per-frame values
/// heliocot.toml            the configuration used, synth section included
/// ```
pub fn synth_dataset(
    config: &PipelineConfig,
    seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<SynthTruth> {
    use rayon::prelude::*;

    let truth = plan(config, seed)?;
    let images = out_dir.join(IMAGES_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let exposures: Vec<f64> = pool.install(|| {
        (0..truth.frames.len())
            .into_par_iter()
            .map(|i| {
                let (img, t) = render_frame(&truth, i)?;
                let path = images.join(frame_file_name(i));
                csvio::write_atomic(&path, &encode_png(&img)?)?;
                Ok(t)
            })
            .collect::<Result<Vec<f64>>>()
    })?;

    let sc = truth.synth();
    let mut sidecar = ExifSidecar::default();
    let mut flags = BTreeMap::new();
    for (i, (f, &t)) in truth.frames.iter().zip(&exposures).enumerate() {
        sidecar.insert(
            frame_file_name(i),
            ExposureMetadata {
                timestamp: Some(f.timestamp),
                exposure_time_s: Some(t),
                iso: Some(sc.iso),
                f_number: Some(sc.f_number),
            },
        );
        flags.insert(f.timestamp, f.is_clear);
    }
    let grids: Vec<CotGrid> = truth.overpasses.iter().map(|o| o.grid).collect();

    csvio::write_atomic(&images.join(SIDECAR_FILE), &sidecar.to_csv())?;
    csvio::write_atomic(&out_dir.join(COT_FILE), &write_cot_csv(&grids))?;
    csvio::write_atomic(&out_dir.join(FLAGS_FILE), &write_clear_flags(&flags))?;
    csvio::write_atomic(&out_dir.join(TRUTH_FILE), &write_truth_csv(&truth.frames))?;
    csvio::write_atomic(
        &out_dir.join(CONFIG_FILE),
        truth.config.to_toml_string().as_bytes(),
    )?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraModel;
    use crate::imaging::{extract_sample, CircumsolarOptions, SampleOutcome, SkyImage};

    fn small_config(sc: SynthConfig) -> PipelineConfig {
        PipelineConfig {
            camera: CameraModel::centered(256, 256).unwrap(),
            synth: Some(sc),
            ..PipelineConfig::default()
        }
    }

    fn small() -> SynthConfig {
        SynthConfig {
            days: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn schedule_shape() {
        let truth = plan(&small_config(small()), 7).unwrap();
        assert_eq!(truth.overpasses.len(), 8);
        for op in &truth.overpasses {
            let h = op.grid.timestamp.seconds_of_day() / 3600;
            assert!(h == 4 || h == 7);
        }
        // 19 or 20 frames per overpass on the even-minute grid
        for i in 0..8 {
            let n = truth.frames.iter().filter(|f| f.overpass == i).count();
            assert!((19..=20).contains(&n), "{n}");
        }
        assert!(truth
            .frames
            .iter()
            .all(|f| f.timestamp.seconds_of_day() % 120 == 0));
        assert!(truth.overpasses[0].is_clear && truth.overpasses[5].is_clear);
    }

    #[test]
    fn cloud_free_schedule_has_zero_difference() {
        let truth = plan(
            &small_config(SynthConfig {
                constant_cot: Some(0.0),
                ..small()
            }),
            1,
        )
        .unwrap();
        assert!(truth
            .frames
            .iter()
            .all(|f| f.true_lum_diff == 0.0 && f.is_clear));
    }

    #[test]
    fn opaque_schedule_hits_most_negative_difference() {
        let sc = SynthConfig {
            constant_cot: Some(100.0),
            ..small()
        };
        let slope = sc.planted_slope;
        let truth = plan(&small_config(sc), 1).unwrap();
        assert!(truth.frames.iter().all(|f| f.true_lum_diff == slope));
    }

    #[test]
    fn rendered_frames_read_back_exactly() {
        let cfg = small_config(small());
        let truth = plan(&cfg, 3).unwrap();
        let opts = CircumsolarOptions {
            radius_px: cfg.circumsolar_radius_px(),
            mask_saturated: false,
        };
        for i in [0, 17, 40, truth.frames.len() - 1] {
            let (img, t) = render_frame(&truth, i).unwrap();
            let f = truth.frames[i];
            let meta = ExposureMetadata {
                timestamp: Some(f.timestamp),
                exposure_time_s: Some(t),
                iso: Some(100.0),
                f_number: Some(8.0),
            };
            let sky = SkyImage::new(img, &meta).unwrap();
            let SampleOutcome::Sample(s) =
                extract_sample(&sky, &cfg.site, &cfg.camera, opts).unwrap()
            else {
                panic!("night")
            };
            assert!(
                (s.l_norm - f.true_l_norm).abs() <= 1e-9 * f.true_l_norm,
                "{} vs {}",
                s.l_norm,
                f.true_l_norm
            );
        }
    }

    #[test]
    fn invalid_schedules_rejected() {
        let night = SynthConfig {
            overpass_hours_utc: vec![16],
            ..small()
        };
        assert!(matches!(
            plan(&small_config(night), 1),
            Err(Error::Config(_))
        ));
        let negative = SynthConfig {
            planted_slope: -1e9,
            ..small()
        };
        assert!(matches!(
            plan(&small_config(negative), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let cfg = small_config(SynthConfig {
            days: 2,
            noise_sigma: 2.0,
            ..SynthConfig::default()
        });
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_dataset(&cfg, 11, a.path(), 2).unwrap();
        synth_dataset(&cfg, 11, b.path(), 1).unwrap();
        for name in [COT_FILE, FLAGS_FILE, TRUTH_FILE, CONFIG_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(name)).unwrap(),
                std::fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
        let imgs = crate::imaging::list_images(&a.path().join(IMAGES_DIR)).unwrap();
        assert!(!imgs.is_empty());
        for p in imgs {
            let other = b.path().join(IMAGES_DIR).join(p.file_name().unwrap());
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(other).unwrap());
        }
    }
}
