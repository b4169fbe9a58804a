//! Solar geometry for a ground site, and projection of the sun into an
//! upward-looking equidistant fisheye image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::UtcInstant;

/// Rooftop camera site used by default (NTU Singapore).
pub const DEFAULT_LATITUDE_DEG: f64 = 1.3483;
pub const DEFAULT_LONGITUDE_DEG: f64 = 103.6831;

/// Years for which the low-precision solar algorithm is trusted.
pub const VALID_YEARS: std::ops::RangeInclusive<i32> = 1950..=2050;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    try_from = "GeoLocationRepr",
    into = "GeoLocationRepr"
)]
pub struct GeoLocation {
    latitude_deg: f64,
    longitude_deg: f64,
    altitude_m: f64,
}

impl GeoLocation {
    pub fn new(latitude_deg: f64, longitude_deg: f64, altitude_m: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(Error::invalid(
                "latitude",
                format!("{latitude_deg} not in [-90, 90]"),
            ));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(Error::invalid(
                "longitude",
                format!("{longitude_deg} not in [-180, 180]"),
            ));
        }
        if !altitude_m.is_finite() {
            return Err(Error::invalid("altitude", altitude_m.to_string()));
        }
        Ok(GeoLocation {
            latitude_deg,
            longitude_deg,
            altitude_m,
        })
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude_deg
    }

    pub fn longitude_deg(&self) -> f64 {
        self.longitude_deg
    }

    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }
}

impl Default for GeoLocation {
    fn default() -> Self {
        GeoLocation {
            latitude_deg: DEFAULT_LATITUDE_DEG,
            longitude_deg: DEFAULT_LONGITUDE_DEG,
            altitude_m: 0.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeoLocationRepr {
    latitude_deg: f64,
    longitude_deg: f64,
    #[serde(default)]
    altitude_m: f64,
}

impl TryFrom<GeoLocationRepr> for GeoLocation {
    type Error = Error;

    fn try_from(r: GeoLocationRepr) -> Result<Self> {
        GeoLocation::new(r.latitude_deg, r.longitude_deg, r.altitude_m)
    }
}

impl From<GeoLocation> for GeoLocationRepr {
    fn from(g: GeoLocation) -> Self {
        GeoLocationRepr {
            latitude_deg: g.latitude_deg,
            longitude_deg: g.longitude_deg,
            altitude_m: g.altitude_m,
        }
    }
}

/// Position of the sun in the local sky. Refraction is not applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub zenith_deg: f64,
    /// Clockwise from true north, in [0, 360).
    pub azimuth_deg: f64,
}

impl SolarPosition {
    pub fn new(zenith_deg: f64, azimuth_deg: f64) -> Self {
        SolarPosition {
            zenith_deg,
            azimuth_deg: wrap_degrees(azimuth_deg),
        }
    }

    pub fn elevation_deg(&self) -> f64 {
        90.0 - self.zenith_deg
    }

    pub fn is_above_horizon(&self) -> bool {
        self.elevation_deg() > 0.0
    }
}

/// Reduces an angle into [0, 360).
pub fn wrap_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negatives up to exactly 360
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Sun position from the NOAA solar calculator equations (Meeus, low
/// precision). Good to a few hundredths of a degree between 1950 and 2050.
pub fn solar_position(t: UtcInstant, loc: &GeoLocation) -> Result<SolarPosition> {
    let year = t.year();
    if !VALID_YEARS.contains(&year) {
        return Err(Error::YearOutOfRange { year });
    }

    let julian_day = t.unix_seconds() as f64 / 86_400.0 + 2_440_587.5;
    let c = (julian_day - 2_451_545.0) / 36_525.0;

    let mean_long = (280.46646 + c * (36_000.769_83 + c * 0.000_303_2)).rem_euclid(360.0);
    let mean_anom = 357.52911 + c * (35_999.050_29 - 0.000_153_7 * c);
    let ecc = 0.016_708_634 - c * (0.000_042_037 + 0.000_000_126_7 * c);
    let m = mean_anom.to_radians();
    let center = m.sin() * (1.914_602 - c * (0.004_817 + 0.000_014 * c))
        + (2.0 * m).sin() * (0.019_993 - 0.000_101 * c)
        + (3.0 * m).sin() * 0.000_289;
    let true_long = mean_long + center;
    let omega = (125.04 - 1_934.136 * c).to_radians();
    let app_long = (true_long - 0.005_69 - 0.004_78 * omega.sin()).to_radians();

    let mean_obliq =
        23.0 + (26.0 + (21.448 - c * (46.815 + c * (0.000_59 - c * 0.001_813))) / 60.0) / 60.0;
    let obliq = (mean_obliq + 0.002_56 * omega.cos()).to_radians();
    let decl = (obliq.sin() * app_long.sin()).asin();

    let y = (obliq / 2.0).tan().powi(2);
    let l0 = mean_long.to_radians();
    let eot_min = 4.0
        * (y * (2.0 * l0).sin() - 2.0 * ecc * m.sin() + 4.0 * ecc * y * m.sin() * (2.0 * l0).cos()
            - 0.5 * y * y * (4.0 * l0).sin()
            - 1.25 * ecc * ecc * (2.0 * m).sin())
        .to_degrees();

    let minutes = t.seconds_of_day() as f64 / 60.0;
    let true_solar_min = (minutes + eot_min + 4.0 * loc.longitude_deg).rem_euclid(1_440.0);
    let hour_angle = (true_solar_min / 4.0 - 180.0).to_radians();

    let lat = loc.latitude_deg.to_radians();
    let cos_zen = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    let zenith = cos_zen.clamp(-1.0, 1.0).acos().to_degrees();

    // Meeus azimuth is measured from south; shift to north-based.
    let az_south = hour_angle
        .sin()
        .atan2(hour_angle.cos() * lat.sin() - decl.tan() * lat.cos());
    Ok(SolarPosition::new(zenith, az_south.to_degrees() + 180.0))
}

/// Geometry of an upward-looking equidistant fisheye camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, try_from = "CameraRepr", into = "CameraRepr")]
pub struct CameraModel {
    image_width_px: u32,
    image_height_px: u32,
    center_x_px: f64,
    center_y_px: f64,
    radius_90deg_px: f64,
    azimuth_offset_deg: f64,
    mirror: bool,
}

impl CameraModel {
    pub fn new(
        image_width_px: u32,
        image_height_px: u32,
        center_x_px: f64,
        center_y_px: f64,
        radius_90deg_px: f64,
        azimuth_offset_deg: f64,
        mirror: bool,
    ) -> Result<Self> {
        if image_width_px == 0 || image_height_px == 0 {
            return Err(Error::invalid(
                "camera",
                "image dimensions must be positive",
            ));
        }
        if !(radius_90deg_px > 0.0 && radius_90deg_px.is_finite()) {
            return Err(Error::invalid(
                "camera",
                format!("radius_90deg_px must be positive, got {radius_90deg_px}"),
            ));
        }
        let inside = (0.0..image_width_px as f64).contains(&center_x_px)
            && (0.0..image_height_px as f64).contains(&center_y_px);
        if !inside {
            return Err(Error::invalid(
                "camera",
                format!("principal point ({center_x_px}, {center_y_px}) outside the image"),
            ));
        }
        if !azimuth_offset_deg.is_finite() {
            return Err(Error::invalid(
                "camera",
                "azimuth_offset_deg must be finite",
            ));
        }
        Ok(CameraModel {
            image_width_px,
            image_height_px,
            center_x_px,
            center_y_px,
            radius_90deg_px,
            azimuth_offset_deg,
            mirror,
        })
    }

    /// Square sensor with the principal point at the image center and the
    /// horizon circle 12 px inside the shorter edge.
    pub fn centered(width: u32, height: u32) -> Result<Self> {
        let radius = (width.min(height) as f64 / 2.0 - 12.0).max(1.0);
        CameraModel::new(
            width,
            height,
            width as f64 / 2.0,
            height as f64 / 2.0,
            radius,
            0.0,
            false,
        )
    }

    pub fn width(&self) -> u32 {
        self.image_width_px
    }

    pub fn height(&self) -> u32 {
        self.image_height_px
    }

    pub fn center(&self) -> (f64, f64) {
        (self.center_x_px, self.center_y_px)
    }

    pub fn radius_90deg_px(&self) -> f64 {
        self.radius_90deg_px
    }

    pub fn azimuth_offset_deg(&self) -> f64 {
        self.azimuth_offset_deg
    }

    pub fn mirror(&self) -> bool {
        self.mirror
    }

    /// Radial pixel distance of a sky point at `zenith_deg`.
    pub fn radius_for_zenith(&self, zenith_deg: f64) -> f64 {
        zenith_deg / 90.0 * self.radius_90deg_px
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel::centered(1024, 1024).expect("valid default camera")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRepr {
    image_width_px: u32,
    image_height_px: u32,
    center_x_px: f64,
    center_y_px: f64,
    radius_90deg_px: f64,
    #[serde(default)]
    azimuth_offset_deg: f64,
    #[serde(default)]
    mirror: bool,
}

impl TryFrom<CameraRepr> for CameraModel {
    type Error = Error;

    fn try_from(r: CameraRepr) -> Result<Self> {
        CameraModel::new(
            r.image_width_px,
            r.image_height_px,
            r.center_x_px,
            r.center_y_px,
            r.radius_90deg_px,
            r.azimuth_offset_deg,
            r.mirror,
        )
    }
}

impl From<CameraModel> for CameraRepr {
    fn from(c: CameraModel) -> Self {
        CameraRepr {
            image_width_px: c.image_width_px,
            image_height_px: c.image_height_px,
            center_x_px: c.center_x_px,
            center_y_px: c.center_y_px,
            radius_90deg_px: c.radius_90deg_px,
            azimuth_offset_deg: c.azimuth_offset_deg,
            mirror: c.mirror,
        }
    }
}

/// Where the sun lands in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SunPixel {
    /// Continuous pixel coordinates; pixel `(c, r)` spans `[c, c+1) x [r, r+1)`.
    Visible {
        x: f64,
        y: f64,
    },
    BelowHorizon,
}

/// Image coordinates of a sky direction, with no horizon or frame checks.
pub fn project_sky_point(zenith_deg: f64, azimuth_deg: f64, cam: &CameraModel) -> (f64, f64) {
    let r = cam.radius_for_zenith(zenith_deg);
    let bearing = (azimuth_deg + cam.azimuth_offset_deg).to_radians();
    let dx = r * bearing.sin();
    let dy = -r * bearing.cos();
    let x = if cam.mirror {
        cam.center_x_px - dx
    } else {
        cam.center_x_px + dx
    };
    (x, cam.center_y_px + dy)
}

/// Projects the sun through the equidistant fisheye model. Bearing zero
/// points to the top of the image; bearings increase clockwise unless the
/// camera is mirrored.
pub fn sun_pixel(sp: &SolarPosition, cam: &CameraModel) -> Result<SunPixel> {
    if !sp.is_above_horizon() {
        return Ok(SunPixel::BelowHorizon);
    }
    let (x, y) = project_sky_point(sp.zenith_deg, sp.azimuth_deg, cam);
    let (w, h) = (cam.image_width_px, cam.image_height_px);
    if !(0.0..w as f64).contains(&x) || !(0.0..h as f64).contains(&y) {
        return Err(Error::OutOfFrame {
            x,
            y,
            width: w,
            height: h,
        });
    }
    Ok(SunPixel::Visible { x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::new(1024, 1024, 512.0, 512.0, 500.0, 0.0, false).unwrap()
    }

    #[test]
    fn rejects_bad_locations() {
        assert!(GeoLocation::new(91.0, 0.0, 0.0).is_err());
        assert!(GeoLocation::new(0.0, -180.5, 0.0).is_err());
        assert!(GeoLocation::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(GeoLocation::new(-90.0, 180.0, 12.0).is_ok());
    }

    #[test]
    fn rejects_bad_cameras() {
        assert!(CameraModel::new(1024, 1024, 512.0, 512.0, 0.0, 0.0, false).is_err());
        assert!(CameraModel::new(1024, 1024, 1024.0, 512.0, 10.0, 0.0, false).is_err());
        assert!(CameraModel::new(0, 1024, 0.0, 512.0, 10.0, 0.0, false).is_err());
    }

    #[test]
    fn year_window_enforced() {
        let loc = GeoLocation::default();
        let t = UtcInstant::from_ymd_hms(2051, 1, 1, 0, 0, 0).unwrap();
        assert!(matches!(
            solar_position(t, &loc),
            Err(Error::YearOutOfRange { year: 2051 })
        ));
        let t = UtcInstant::from_ymd_hms(1949, 12, 31, 23, 59, 59).unwrap();
        assert!(solar_position(t, &loc).is_err());
        let t = UtcInstant::from_ymd_hms(1950, 1, 1, 0, 0, 0).unwrap();
        assert!(solar_position(t, &loc).is_ok());
    }

    #[test]
    fn equatorial_noon_near_june_solstice() {
        // NREL SPA: elevation 66.5608 deg
        let t = UtcInstant::from_ymd_hms(2015, 6, 21, 12, 0, 0).unwrap();
        let sp = solar_position(t, &GeoLocation::new(0.0, 0.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(sp.elevation_deg(), 66.5608, epsilon = 0.5);
    }

    #[test]
    fn site_solar_noon_new_year() {
        let t = UtcInstant::from_ymd_hms(2015, 1, 1, 5, 4, 0).unwrap();
        let sp = solar_position(t, &GeoLocation::default()).unwrap();
        assert!(sp.zenith_deg < 25.0, "zenith {}", sp.zenith_deg);
    }

    #[test]
    fn zenith_projects_to_principal_point() {
        for az in [0.0, 45.0, 200.0, 359.9] {
            let p = sun_pixel(&SolarPosition::new(0.0, az), &cam()).unwrap();
            assert_eq!(p, SunPixel::Visible { x: 512.0, y: 512.0 });
        }
    }

    #[test]
    fn horizon_north_is_image_up() {
        let c = CameraModel::new(1024, 1024, 512.0, 512.0, 500.0, 0.0, false).unwrap();
        let (x, y) = project_sky_point(90.0, 0.0, &c);
        assert_abs_diff_eq!(x, 512.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y, 12.0, epsilon = 1e-9);
        // zenith exactly 90 counts as below the horizon for sun_pixel
        assert_eq!(
            sun_pixel(&SolarPosition::new(90.0, 0.0), &c).unwrap(),
            SunPixel::BelowHorizon
        );
        let p = sun_pixel(&SolarPosition::new(89.999_999, 0.0), &c).unwrap();
        let SunPixel::Visible { x, y } = p else {
            panic!("expected visible")
        };
        assert_abs_diff_eq!(x, 512.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y, 512.0 - 500.0, epsilon = 1e-3);
    }

    #[test]
    fn east_is_right_unless_mirrored() {
        let sp = SolarPosition::new(45.0, 90.0);
        let SunPixel::Visible { x, .. } = sun_pixel(&sp, &cam()).unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(x, 762.0, epsilon = 1e-9);
        let m = CameraModel::new(1024, 1024, 512.0, 512.0, 500.0, 0.0, true).unwrap();
        let SunPixel::Visible { x, .. } = sun_pixel(&sp, &m).unwrap() else {
            panic!()
        };
        assert_abs_diff_eq!(x, 262.0, epsilon = 1e-9);
    }

    #[test]
    fn below_horizon_and_out_of_frame() {
        let sp = SolarPosition::new(95.0, 10.0);
        assert_eq!(sun_pixel(&sp, &cam()).unwrap(), SunPixel::BelowHorizon);
        let big = CameraModel::new(200, 200, 100.0, 100.0, 500.0, 0.0, false).unwrap();
        let err = sun_pixel(&SolarPosition::new(60.0, 0.0), &big).unwrap_err();
        assert!(matches!(err, Error::OutOfFrame { .. }));
    }

    #[test]
    fn wrap_never_returns_360() {
        assert_eq!(wrap_degrees(-1e-18), 0.0);
        assert_eq!(wrap_degrees(360.0), 0.0);
        assert_eq!(wrap_degrees(-90.0), 270.0);
    }

    proptest! {
        #[test]
        fn position_identities(
            secs in 0i64..2_524_607_999, // 1970..2049
            lat in -90.0f64..=90.0,
            lon in -180.0f64..=180.0,
        ) {
            let t = UtcInstant::from_unix_seconds(secs).unwrap();
            let sp = solar_position(t, &GeoLocation::new(lat, lon, 0.0).unwrap()).unwrap();
            prop_assert!((0.0..=180.0).contains(&sp.zenith_deg));
            prop_assert!((0.0..360.0).contains(&sp.azimuth_deg));
            prop_assert!((sp.zenith_deg + sp.elevation_deg() - 90.0).abs() < 1e-12);
        }

        #[test]
        fn projection_radius_monotone_in_zenith(
            z1 in 0.0f64..89.0, dz in 0.001f64..1.0, az in 0.0f64..360.0,
        ) {
            let c = cam();
            let d = |z: f64| match sun_pixel(&SolarPosition::new(z, az), &c).unwrap() {
                SunPixel::Visible { x, y } => (x - 512.0).hypot(y - 512.0),
                SunPixel::BelowHorizon => unreachable!(),
            };
            prop_assert!(d(z1 + dz) > d(z1));
        }

        #[test]
        fn azimuth_does_not_change_radius(z in 0.0f64..89.9, a1 in 0.0f64..360.0, a2 in 0.0f64..360.0) {
            let c = cam();
            let r = |a: f64| match sun_pixel(&SolarPosition::new(z, a), &c).unwrap() {
                SunPixel::Visible { x, y } => (x - 512.0).hypot(y - 512.0),
                SunPixel::BelowHorizon => unreachable!(),
            };
            prop_assert!((r(a1) - r(a2)).abs() < 1e-9);
        }
    }
}
