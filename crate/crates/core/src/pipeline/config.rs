use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::{BandSet, Resampling, DEFAULT_PATCH_SIZE};
use crate::lidar::{
    DalponteParams, PitFreeParams, DEFAULT_WINDOW_RADIUS, NDVI_THRESHOLD, Z_MAX_FT, Z_MIN_FT,
};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthConfig {
    pub ndvi_threshold: f64,
    pub zmin: f64,
    pub zmax: f64,
    /// Treetop search radius, map units.
    pub window_radius: f64,
    pub pitfree: PitFreeParams,
    pub dalponte: DalponteParams,
    /// Tile edge in pixels; each tile is processed with `tile_buffer` extra
    /// pixels on every side so crowns on tile edges are not clipped.
    pub tile_size: usize,
    pub tile_buffer: usize,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            ndvi_threshold: NDVI_THRESHOLD,
            zmin: Z_MIN_FT,
            zmax: Z_MAX_FT,
            window_radius: DEFAULT_WINDOW_RADIUS,
            pitfree: PitFreeParams::default(),
            dalponte: DalponteParams::default(),
            tile_size: 1000,
            tile_buffer: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub bands: BandSet,
    pub patch_size: usize,
    /// Defaults to the patch size (disjoint windows).
    pub stride: Option<usize>,
    pub resampling: Resampling,
    /// Pixel heights are divided by this many feet.
    pub height_max: f32,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            bands: BandSet::Ms14,
            patch_size: DEFAULT_PATCH_SIZE,
            stride: None,
            resampling: Resampling::Bilinear,
            height_max: Z_MAX_FT as f32,
        }
    }
}

impl PrepareConfig {
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.patch_size)
    }
}

/// Settings shared by all subcommands, loadable from `--config` JSON.
/// Command-line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Required by `synth` and `train`, from here or `--seed`.
    pub seed: Option<u64>,
    pub ground_truth: GroundTruthConfig,
    pub prepare: PrepareConfig,
    pub train: TrainConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CanopyError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CanopyError::Config(format!("{}: {e}", path.display())))
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| CanopyError::Config("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let gt = &self.ground_truth;
        if !(-1.0..=1.0).contains(&gt.ndvi_threshold) {
            return Err(CanopyError::Config(format!(
                "NDVI threshold must lie in [-1, 1], got {}",
                gt.ndvi_threshold
            )));
        }
        if !(gt.zmin >= 0.0 && gt.zmin <= gt.zmax && gt.zmax.is_finite()) {
            return Err(CanopyError::Config(format!(
                "height filter needs 0 ≤ zmin ≤ zmax, got [{}, {}]",
                gt.zmin, gt.zmax
            )));
        }
        if !(gt.window_radius > 0.0) || gt.tile_size == 0 {
            return Err(CanopyError::Config(
                "window radius and tile size must be positive".into(),
            ));
        }
        gt.dalponte.validate()?;
        let p = &self.prepare;
        if p.patch_size == 0 || p.stride() == 0 || !(p.height_max > 0.0) {
            return Err(CanopyError::Config(
                "patch size, stride and height_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_partial_json() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"seed": 4, "ground_truth": {"zmin": 5.0}}"#).unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.ground_truth.zmin, 5.0);
        assert_eq!(c.ground_truth.zmax, 80.0);
        assert_eq!(c.ground_truth.ndvi_threshold, 0.05);
        assert_eq!(c.prepare.patch_size, 240);
        assert_eq!(c.train.test_fraction, 0.25);
        c.validate().unwrap();
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 4}"#).is_err());
    }

    #[test]
    fn rejects_out_of_range() {
        let mut c = PipelineConfig::default();
        c.ground_truth.zmin = 90.0;
        assert!(matches!(c.validate(), Err(CanopyError::Config(_))));
        assert!(PipelineConfig::default().require_seed().is_err());
    }
}
