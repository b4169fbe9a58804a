//! Circumsolar luminance extraction from sky images.

mod metadata;

use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use chrono::FixedOffset;
use image::RgbImage;

pub use metadata::{read_exif, ExifSidecar, Exposure, ExposureMetadata, SIDECAR_HEADER};

use crate::csvio::{self, TableWriter};
use crate::error::{Error, Result};
use crate::geometry::{solar_position, sun_pixel, CameraModel, GeoLocation, SunPixel};
use crate::time::UtcInstant;

pub const LUMINANCE_HEADER: [&str; 4] = ["timestamp_utc", "y_raw", "l_norm", "n_pixels"];

const REC709: [f64; 3] = [0.2126, 0.7152, 0.0722];

fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

static LINEAR: LazyLock<[f64; 256]> = LazyLock::new(|| {
    let mut t = [0.0; 256];
    for (v, slot) in t.iter_mut().enumerate() {
        *slot = srgb_to_linear(v as u8);
    }
    t
});

/// BT.709 relative luminance of an 8-bit sRGB pixel, in [0, 1].
pub fn relative_luminance(r: u8, g: u8, b: u8) -> f64 {
    let lin = &*LINEAR;
    REC709[0] * lin[r as usize] + REC709[1] * lin[g as usize] + REC709[2] * lin[b as usize]
}

/// A decoded sky image together with its validated exposure settings.
#[derive(Debug, Clone)]
pub struct SkyImage {
    pub pixels: RgbImage,
    pub timestamp: UtcInstant,
    pub exposure: Exposure,
}

impl SkyImage {
    /// Fails with [`Error::MissingMetadata`] naming the first absent or
    /// non-positive field.
    pub fn new(pixels: RgbImage, meta: &ExposureMetadata) -> Result<Self> {
        let (timestamp, exposure) = meta.validate()?;
        Ok(SkyImage {
            pixels,
            timestamp,
            exposure,
        })
    }
}

/// Exposure-normalized luminance of one frame's circumsolar region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuminanceSample {
    pub timestamp: UtcInstant,
    pub y_raw: f64,
    pub l_norm: f64,
    pub n_pixels: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleOutcome {
    Sample(LuminanceSample),
    Night,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircumsolarOptions {
    pub radius_px: u32,
    /// Skip pixels with any channel at 255.
    pub mask_saturated: bool,
}

/// Mean relative luminance over the pixels whose centers lie within
/// `radius_px` of `sun`, clipped to the frame. Returns the mean and the
/// number of pixels averaged.
pub fn circumsolar_luminance(
    pixels: &RgbImage,
    sun: (f64, f64),
    opts: CircumsolarOptions,
) -> Result<(f64, u64)> {
    let (w, h) = pixels.dimensions();
    let (sx, sy) = sun;
    if !(0.0..w as f64).contains(&sx) || !(0.0..h as f64).contains(&sy) {
        return Err(Error::OutOfFrame {
            x: sx,
            y: sy,
            width: w,
            height: h,
        });
    }
    let r = opts.radius_px as f64;
    let r2 = r * r;
    let col_lo = (sx - r - 0.5).floor().max(0.0) as u32;
    let col_hi = ((sx + r - 0.5).ceil().max(0.0) as u32).min(w - 1);
    let row_lo = (sy - r - 0.5).floor().max(0.0) as u32;
    let row_hi = ((sy + r - 0.5).ceil().max(0.0) as u32).min(h - 1);

    let mut sum = 0.0;
    let mut n = 0u64;
    for row in row_lo..=row_hi {
        let dy = row as f64 + 0.5 - sy;
        for col in col_lo..=col_hi {
            let dx = col as f64 + 0.5 - sx;
            if dx * dx + dy * dy > r2 {
                continue;
            }
            let [red, green, blue] = pixels.get_pixel(col, row).0;
            if opts.mask_saturated && (red == 255 || green == 255 || blue == 255) {
                continue;
            }
            sum += relative_luminance(red, green, blue);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(((sum / n as f64).clamp(0.0, 1.0), n))
}

/// Reflected-light exposure equation: `y * N^2 / (t * ISO / 100)`.
pub fn normalize_exposure(y: f64, exposure: &Exposure) -> f64 {
    y * exposure.f_number * exposure.f_number / (exposure.exposure_time_s * exposure.iso / 100.0)
}

/// Locates the sun in `img`, averages the circumsolar disk and normalizes
/// by exposure. Frames with the sun at or below the horizon come back as
/// [`SampleOutcome::Night`].
pub fn extract_sample(
    img: &SkyImage,
    loc: &GeoLocation,
    cam: &CameraModel,
    opts: CircumsolarOptions,
) -> Result<SampleOutcome> {
    let sp = solar_position(img.timestamp, loc)?;
    let (x, y) = match sun_pixel(&sp, cam)? {
        SunPixel::BelowHorizon => return Ok(SampleOutcome::Night),
        SunPixel::Visible { x, y } => (x, y),
    };
    let (y_raw, n_pixels) = circumsolar_luminance(&img.pixels, (x, y), opts)?;
    Ok(SampleOutcome::Sample(LuminanceSample {
        timestamp: img.timestamp,
        y_raw,
        l_norm: normalize_exposure(y_raw, &img.exposure),
        n_pixels,
    }))
}

/// Image files (`.jpg`, `.jpeg`, `.png`) in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("jpg" | "jpeg" | "png")) && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Decodes one image and resolves its exposure metadata: embedded EXIF
/// first, then the sidecar entry for the file name.
pub fn load_sky_image(
    path: &Path,
    sidecar: Option<&ExifSidecar>,
    naive_offset: FixedOffset,
) -> Result<SkyImage> {
    let bytes = csvio::read_file(path)?;
    let mut meta = read_exif(&bytes, naive_offset);
    if let Some(entry) = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| sidecar.and_then(|s| s.get(n)))
    {
        meta = meta.or(entry);
    }
    let (timestamp, exposure) = meta.validate().map_err(|e| match e {
        Error::MissingMetadata { field, .. } => Error::MissingMetadata {
            field,
            file: Some(path.to_path_buf()),
        },
        other => other,
    })?;
    let pixels = image::load_from_memory(&bytes)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    Ok(SkyImage {
        pixels,
        timestamp,
        exposure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractionStats {
    pub images: usize,
    pub night: usize,
}

/// Runs [`extract_sample`] over every image in `dir` on `jobs` worker
/// threads. Night frames are dropped; the result is sorted by timestamp.
pub fn extract_directory(
    dir: &Path,
    sidecar: Option<&ExifSidecar>,
    naive_offset: FixedOffset,
    loc: &GeoLocation,
    cam: &CameraModel,
    opts: CircumsolarOptions,
    jobs: usize,
) -> Result<(Vec<LuminanceSample>, ExtractionStats)> {
    use rayon::prelude::*;

    let files = list_images(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Result<SampleOutcome>> = pool.install(|| {
        files
            .par_iter()
            .map(|path| {
                let img = load_sky_image(path, sidecar, naive_offset)?;
                extract_sample(&img, loc, cam, opts).map_err(|e| match e {
                    Error::OutOfFrame { .. } | Error::EmptyRegion => {
                        Error::invalid("image", format!("{}: {e}", path.display()))
                    }
                    other => other,
                })
            })
            .collect()
    });

    let mut stats = ExtractionStats {
        images: files.len(),
        night: 0,
    };
    let mut samples = Vec::with_capacity(files.len());
    for outcome in outcomes {
        match outcome? {
            SampleOutcome::Sample(s) => samples.push(s),
            SampleOutcome::Night => stats.night += 1,
        }
    }
    // stable: equal timestamps keep file-name order
    samples.sort_by_key(|s| s.timestamp);
    Ok((samples, stats))
}

pub fn write_luminance_csv(samples: &[LuminanceSample]) -> Vec<u8> {
    let mut w = TableWriter::new(&LUMINANCE_HEADER);
    for s in samples {
        w.row([
            s.timestamp.to_string(),
            csvio::fmt_f64(s.y_raw),
            csvio::fmt_f64(s.l_norm),
            s.n_pixels.to_string(),
        ]);
    }
    w.into_bytes()
}

pub fn parse_luminance_csv<R: std::io::Read>(input: R) -> Result<Vec<LuminanceSample>> {
    let rows = csvio::read_rows(input, &LUMINANCE_HEADER)?;
    let mut out: Vec<LuminanceSample> = Vec::with_capacity(rows.len());
    for row in rows {
        let sample = LuminanceSample {
            timestamp: row.timestamp(0)?,
            y_raw: row.f64(1, "y_raw")?,
            l_norm: row.f64(2, "l_norm")?,
            n_pixels: row.u64(3, "n_pixels")?,
        };
        if !(0.0..=1.0).contains(&sample.y_raw) {
            return Err(Error::Parse {
                line: row.line,
                message: format!("y_raw {} outside [0, 1]", sample.y_raw),
            });
        }
        if sample.l_norm < 0.0 {
            return Err(Error::Parse {
                line: row.line,
                message: format!("l_norm {} is negative", sample.l_norm),
            });
        }
        if sample.n_pixels == 0 {
            return Err(Error::Parse {
                line: row.line,
                message: "n_pixels must be positive".into(),
            });
        }
        if let Some(prev) = out.last() {
            if sample.timestamp < prev.timestamp {
                return Err(Error::Ordering {
                    line: row.line,
                    detail: format!("{} after {}", sample.timestamp, prev.timestamp),
                });
            }
        }
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use image::Rgb;
    use proptest::prelude::*;

    fn exposure(t: f64, iso: f64, f: f64) -> Exposure {
        Exposure {
            exposure_time_s: t,
            iso,
            f_number: f,
        }
    }

    fn opts(radius_px: u32) -> CircumsolarOptions {
        CircumsolarOptions {
            radius_px,
            mask_saturated: false,
        }
    }

    #[test]
    fn luminance_of_reference_colors() {
        assert_eq!(relative_luminance(255, 255, 255), 1.0);
        assert_eq!(relative_luminance(0, 0, 0), 0.0);
        // hand evaluation: ((128/255 + 0.055)/1.055)^2.4
        let lin: f64 = ((128.0 / 255.0 + 0.055) / 1.055_f64).powf(2.4);
        assert_abs_diff_eq!(lin, 0.2158605, epsilon = 1e-6);
        assert_abs_diff_eq!(relative_luminance(128, 128, 128), lin, epsilon = 1e-12);
        assert_abs_diff_eq!(relative_luminance(128, 128, 128), 0.2159, epsilon = 1e-4);
    }

    #[test]
    fn luminance_is_monotone_per_channel() {
        for v in 0..255u8 {
            for other in [0u8, 77, 255] {
                assert!(
                    relative_luminance(v + 1, other, other) > relative_luminance(v, other, other)
                );
                assert!(
                    relative_luminance(other, v + 1, other) > relative_luminance(other, v, other)
                );
                assert!(
                    relative_luminance(other, other, v + 1) > relative_luminance(other, other, v)
                );
            }
        }
    }

    #[test]
    fn uniform_white_mean_is_one() {
        let img = RgbImage::from_pixel(64, 48, Rgb([255, 255, 255]));
        let (y, n) = circumsolar_luminance(&img, (10.2, 40.7), opts(7)).unwrap();
        assert_abs_diff_eq!(y, 1.0, epsilon = 1e-12);
        assert!(n > 0);
    }

    #[test]
    fn planted_disk_is_recovered() {
        let (sx, sy, r) = (40.3, 25.8, 9u32);
        let mut img = RgbImage::from_pixel(96, 64, Rgb([10, 10, 10]));
        let mut planted = 0;
        for (c, row, px) in img.enumerate_pixels_mut() {
            let (dx, dy) = (c as f64 + 0.5 - sx, row as f64 + 0.5 - sy);
            if dx * dx + dy * dy <= (r * r) as f64 {
                *px = Rgb([200, 180, 160]);
                planted += 1;
            }
        }
        let (y, n) = circumsolar_luminance(&img, (sx, sy), opts(r)).unwrap();
        assert_eq!(n, planted);
        assert_abs_diff_eq!(y, relative_luminance(200, 180, 160), epsilon = 1e-12);
    }

    #[test]
    fn disk_is_clipped_at_the_frame() {
        let img = RgbImage::from_pixel(20, 20, Rgb([90, 90, 90]));
        let (_, full) = circumsolar_luminance(&img, (10.0, 10.0), opts(4)).unwrap();
        let (_, corner) = circumsolar_luminance(&img, (0.0, 0.0), opts(4)).unwrap();
        assert!(corner < full / 3);
    }

    #[test]
    fn empty_region_and_out_of_frame() {
        let img = RgbImage::from_pixel(8, 8, Rgb([90, 90, 90]));
        assert!(matches!(
            circumsolar_luminance(&img, (0.0, 0.0), opts(0)),
            Err(Error::EmptyRegion)
        ));
        assert!(matches!(
            circumsolar_luminance(&img, (8.0, 1.0), opts(2)),
            Err(Error::OutOfFrame { .. })
        ));
    }

    #[test]
    fn saturated_pixels_can_be_masked() {
        let mut img = RgbImage::from_pixel(10, 10, Rgb([100, 100, 100]));
        img.put_pixel(5, 5, Rgb([255, 255, 255]));
        let on = circumsolar_luminance(&img, (5.5, 5.5), opts(2)).unwrap();
        let masked = circumsolar_luminance(
            &img,
            (5.5, 5.5),
            CircumsolarOptions {
                radius_px: 2,
                mask_saturated: true,
            },
        )
        .unwrap();
        assert_eq!(masked.1 + 1, on.1);
        assert_abs_diff_eq!(masked.0, relative_luminance(100, 100, 100), epsilon = 1e-12);
    }

    #[test]
    fn exposure_equation() {
        assert_abs_diff_eq!(
            normalize_exposure(0.5, &exposure(0.001, 100.0, 8.0)),
            32_000.0,
            epsilon = 1e-9
        );
        assert_eq!(normalize_exposure(0.0, &exposure(0.3, 800.0, 2.8)), 0.0);
        let a = normalize_exposure(0.4, &exposure(0.01, 200.0, 4.0));
        let b = normalize_exposure(0.4, &exposure(0.02, 200.0, 4.0));
        assert_abs_diff_eq!(a, 2.0 * b, epsilon = 1e-9);
    }

    #[test]
    fn midnight_is_night() {
        let meta = ExposureMetadata {
            timestamp: Some(UtcInstant::from_ymd_hms(2015, 3, 1, 16, 0, 0).unwrap()),
            exposure_time_s: Some(0.001),
            iso: Some(100.0),
            f_number: Some(8.0),
        };
        let img = SkyImage::new(RgbImage::new(64, 64), &meta).unwrap();
        let cam = CameraModel::centered(64, 64).unwrap();
        let out = extract_sample(&img, &GeoLocation::default(), &cam, opts(3)).unwrap();
        assert_eq!(out, SampleOutcome::Night);
    }

    #[test]
    fn missing_iso_is_named() {
        let meta = ExposureMetadata {
            timestamp: Some(UtcInstant::from_ymd_hms(2015, 3, 1, 4, 0, 0).unwrap()),
            exposure_time_s: Some(0.001),
            iso: None,
            f_number: Some(8.0),
        };
        let err = SkyImage::new(RgbImage::new(4, 4), &meta).unwrap_err();
        assert!(matches!(err, Error::MissingMetadata { field: "iso", .. }));
        assert!(err.to_string().contains("iso"));
    }

    #[test]
    fn luminance_csv_rejects_bad_rows() {
        let hdr = "timestamp_utc,y_raw,l_norm,n_pixels\n";
        let bad_y = format!("{hdr}2015-01-01T04:00:00Z,1.5,3,10\n");
        assert!(parse_luminance_csv(bad_y.as_bytes()).is_err());
        let unsorted =
            format!("{hdr}2015-01-01T04:02:00Z,0.5,3,10\n2015-01-01T04:00:00Z,0.5,3,10\n");
        assert!(matches!(
            parse_luminance_csv(unsorted.as_bytes()),
            Err(Error::Ordering { line: 3, .. })
        ));
    }

    proptest! {
        #[test]
        fn uniform_field_is_position_invariant(
            r in 0u8..=255, g in 0u8..=255, b in 0u8..=255,
            sx in 0.0f64..50.0, sy in 0.0f64..40.0, radius in 1u32..30,
        ) {
            let img = RgbImage::from_pixel(50, 40, Rgb([r, g, b]));
            let (y, _) = circumsolar_luminance(&img, (sx, sy), opts(radius)).unwrap();
            prop_assert!((y - relative_luminance(r, g, b)).abs() < 1e-12);
        }

        #[test]
        fn exposure_is_linear_and_reciprocal(
            y in 0.0f64..=1.0, k in 0.0f64..=1.0,
            t in 1e-5f64..1.0, iso in 50.0f64..6400.0, f in 1.0f64..22.0,
        ) {
            let e = exposure(t, iso, f);
            let lin = normalize_exposure(k * y, &e) - k * normalize_exposure(y, &e);
            prop_assert!(lin.abs() <= 1e-9 * normalize_exposure(1.0, &e));
            let doubled = exposure(2.0 * t, iso, f);
            let d = normalize_exposure(y, &e) - 2.0 * normalize_exposure(y, &doubled);
            prop_assert!(d.abs() <= 1e-9 * normalize_exposure(1.0, &e));
        }

        #[test]
        fn luminance_csv_round_trip(
            rows in proptest::collection::vec(
                (0i64..86_400 * 365, 0.0f64..=1.0, 0.0f64..1e9, 1u64..1_000_000), 0..20)
        ) {
            let base = UtcInstant::from_ymd_hms(2015, 1, 1, 0, 0, 0).unwrap();
            let mut samples: Vec<_> = rows.iter().map(|&(dt, y, l, n)| LuminanceSample {
                timestamp: base.add_seconds(dt), y_raw: y, l_norm: l, n_pixels: n,
            }).collect();
            samples.sort_by_key(|s| s.timestamp);
            let bytes = write_luminance_csv(&samples);
            let parsed = parse_luminance_csv(bytes.as_slice()).unwrap();
            prop_assert_eq!(&parsed, &samples);
            prop_assert_eq!(write_luminance_csv(&parsed), bytes);
        }
    }
}
