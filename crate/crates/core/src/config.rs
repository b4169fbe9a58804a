//! `heliocot.toml`: every tunable constant of the pipeline in one file.
//! Unknown keys are rejected; absent keys take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clearsky::ClearSkyParams;
use crate::csvio;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, GeoLocation};
use crate::imaging::CircumsolarOptions;
use crate::pipeline::{AlignOptions, NormalizationMode, WindowAnchor};
use crate::synth::SynthConfig;

/// Singapore standard time; applied to naive timestamps only on request.
pub const DEFAULT_LOCAL_UTC_OFFSET_HOURS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub local_utc_offset_hours: f64,
    pub site: GeoLocation,
    pub camera: CameraModel,
    pub clear_sky: ClearSkyParams,
    pub imaging: ImagingConfig,
    pub fit: FitConfig,
    pub cot: CotConfig,
    pub align: AlignConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingConfig {
    /// Defaults to a tenth of the camera's 90-degree radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circumsolar_radius_px: Option<u32>,
    pub mask_saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub intercept: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { intercept: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CotConfig {
    pub min_valid_cells: usize,
}

impl Default for CotConfig {
    fn default() -> Self {
        CotConfig { min_valid_cells: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub window_min: f64,
    pub window_anchor: WindowAnchor,
    pub min_samples: usize,
    pub normalization: NormalizationMode,
}

impl Default for AlignConfig {
    fn default() -> Self {
        let d = AlignOptions::default();
        AlignConfig {
            window_min: d.window_min,
            window_anchor: d.anchor,
            min_samples: d.min_samples,
            normalization: NormalizationMode::Signed,
        }
    }
}

impl AlignConfig {
    pub fn options(&self) -> AlignOptions {
        AlignOptions {
            window_min: self.window_min,
            anchor: self.window_anchor,
            min_samples: self.min_samples,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            local_utc_offset_hours: DEFAULT_LOCAL_UTC_OFFSET_HOURS,
            site: GeoLocation::default(),
            camera: CameraModel::default(),
            clear_sky: ClearSkyParams::default(),
            imaging: ImagingConfig::default(),
            fit: FitConfig::default(),
            cot: CotConfig::default(),
            align: AlignConfig::default(),
            synth: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = csvio::read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        PipelineConfig::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        crate::time::offset_hours(self.local_utc_offset_hours)
            .map_err(|_| Error::Config("local_utc_offset_hours out of range".into()))?;
        self.align
            .options()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.imaging.circumsolar_radius_px == Some(0) {
            return Err(Error::Config(
                "circumsolar_radius_px must be positive".into(),
            ));
        }
        if !(1..=9).contains(&self.cot.min_valid_cells) {
            return Err(Error::Config("cot.min_valid_cells must be in 1..=9".into()));
        }
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        Ok(())
    }

    pub fn circumsolar_radius_px(&self) -> u32 {
        self.imaging
            .circumsolar_radius_px
            .unwrap_or_else(|| (0.1 * self.camera.radius_90deg_px()).round().max(1.0) as u32)
    }

    pub fn circumsolar_options(&self) -> CircumsolarOptions {
        CircumsolarOptions {
            radius_px: self.circumsolar_radius_px(),
            mask_saturated: self.imaging.mask_saturated,
        }
    }
}
