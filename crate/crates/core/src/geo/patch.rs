use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::{Raster, RasterStack};

pub const DEFAULT_PATCH_SIZE: usize = 240;

/// One training example: input bands plus the three target layers, all
/// `height × width`, band-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub in_bands: usize,
    pub height: usize,
    pub width: usize,
    pub inputs: Vec<f32>,
    pub tree_mask: Vec<f32>,
    pub pixel_height: Vec<f32>,
    pub aux_mask: Vec<f32>,
}

impl PatchSample {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pixels();
        if self.inputs.len() != n * self.in_bands
            || self.tree_mask.len() != n
            || self.pixel_height.len() != n
            || self.aux_mask.len() != n
        {
            return Err(CanopyError::Shape(format!(
                "patch sample buffers do not match {}x{}x{}",
                self.in_bands, self.height, self.width
            )));
        }
        Ok(())
    }
}

/// A window into a stack together with the sample cut from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
    pub sample: PatchSample,
}

/// The three per-pixel targets sharing the stack's grid.
#[derive(Debug, Clone, Copy)]
pub struct PatchTargets<'a> {
    pub tree_mask: &'a Raster,
    pub pixel_height: &'a Raster,
    pub aux_mask: &'a Raster,
}

/// Top-left corners of all full windows, row-major.
pub fn window_origins(height: usize, width: usize, size: usize, stride: usize) -> Vec<(usize, usize)> {
    if size == 0 || stride == 0 || height < size || width < size {
        return Vec::new();
    }
    let rows = (height - size) / stride + 1;
    let cols = (width - size) / stride + 1;
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i * stride, j * stride)))
        .collect()
}

/// Cut `size × size` windows at `stride`; partial windows at the right and
/// bottom edges are dropped.
pub fn extract_patches(
    stack: &RasterStack,
    targets: PatchTargets<'_>,
    size: usize,
    stride: usize,
) -> Result<Vec<Patch>> {
    if size == 0 || stride == 0 {
        return Err(CanopyError::Config(format!(
            "patch size and stride must be ≥ 1 (size {size}, stride {stride})"
        )));
    }
    let g = stack.geometry();
    for (name, t) in [
        ("tree mask", targets.tree_mask),
        ("pixel height", targets.pixel_height),
        ("aux mask", targets.aux_mask),
    ] {
        t.require_single_band(name)?;
        g.ensure_same_grid(&t.geometry)?;
    }
    let bands = stack.bands();
    let origins = window_origins(g.height, g.width, size, stride);
    let window = |src: &[f32], row0: usize, col0: usize, out: &mut Vec<f32>| {
        for r in row0..row0 + size {
            let start = g.index(r, col0);
            out.extend_from_slice(&src[start..start + size]);
        }
    };
    let patches = origins
        .into_iter()
        .map(|(row0, col0)| {
            let mut inputs = Vec::with_capacity(bands * size * size);
            for b in 0..bands {
                window(stack.raster.band(b), row0, col0, &mut inputs);
            }
            let mut tree_mask = Vec::with_capacity(size * size);
            window(targets.tree_mask.data(), row0, col0, &mut tree_mask);
            let mut pixel_height = Vec::with_capacity(size * size);
            window(targets.pixel_height.data(), row0, col0, &mut pixel_height);
            let mut aux_mask = Vec::with_capacity(size * size);
            window(targets.aux_mask.data(), row0, col0, &mut aux_mask);
            Patch {
                row0,
                col0,
                size,
                sample: PatchSample {
                    in_bands: bands,
                    height: size,
                    width: size,
                    inputs,
                    tree_mask,
                    pixel_height,
                    aux_mask,
                },
            }
        })
        .collect();
    Ok(patches)
}

/// Per-band value range used to scale inputs into [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub min: Vec<f32>,
    pub max: Vec<f32>,
}

impl BandStats {
    /// Min/max over valid pixels of every band. Bands with no valid pixel get (0, 0).
    pub fn compute(raster: &Raster) -> Self {
        let mut min = Vec::with_capacity(raster.bands());
        let mut max = Vec::with_capacity(raster.bands());
        for b in 0..raster.bands() {
            let (lo, hi) = raster
                .band(b)
                .iter()
                .filter(|v| !raster.is_nodata(**v))
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if lo.is_finite() {
                min.push(lo);
                max.push(hi);
            } else {
                min.push(0.0);
                max.push(0.0);
            }
        }
        Self { min, max }
    }
}

/// A band that could not be scaled because its range is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizeWarning {
    pub band: usize,
    pub role: String,
    pub value: f32,
}

/// Affine per-band map `(v − min) / (max − min)`. Nodata is preserved;
/// degenerate bands (max = min) are set to 0 and reported.
pub fn normalize(
    stack: &RasterStack,
    stats: &BandStats,
) -> Result<(RasterStack, Vec<NormalizeWarning>)> {
    let bands = stack.bands();
    if stats.min.len() != bands || stats.max.len() != bands {
        return Err(CanopyError::Shape(format!(
            "stats cover {} bands, stack has {bands}",
            stats.min.len()
        )));
    }
    let mut out = stack.clone();
    let mut warnings = Vec::new();
    for b in 0..bands {
        let (lo, hi) = (stats.min[b], stats.max[b]);
        if !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(CanopyError::Config(format!(
                "band {b} has invalid stats ({lo}, {hi})"
            )));
        }
        let nodata = out.raster.nodata;
        let degenerate = hi == lo;
        if degenerate {
            warnings.push(NormalizeWarning {
                band: b,
                role: stack.band_roles.get(b).cloned().unwrap_or_default(),
                value: lo,
            });
        }
        let span = (hi - lo) as f64;
        for v in out.raster.band_mut(b) {
            if *v == nodata || v.is_nan() {
                continue;
            }
            *v = if degenerate {
                0.0
            } else {
                ((*v as f64 - lo as f64) / span) as f32
            };
        }
    }
    Ok((out, warnings))
}

/// Heights divided by `height_max`; nodata preserved.
pub fn normalize_height(raster: &Raster, height_max: f32) -> Result<Raster> {
    if !(height_max > 0.0) {
        return Err(CanopyError::Config(format!(
            "height_max must be positive, got {height_max}"
        )));
    }
    let mut out = raster.clone();
    let nodata = out.nodata;
    for v in out.data_mut() {
        if *v != nodata && !v.is_nan() {
            *v /= height_max;
        }
    }
    Ok(out)
}

/// Replace nodata with `fill` so the result can feed a network.
pub fn fill_nodata(raster: &Raster, fill: f32) -> Raster {
    let mut out = raster.clone();
    let nodata = out.nodata;
    for v in out.data_mut() {
        if *v == nodata || v.is_nan() {
            *v = fill;
        }
    }
    out
}
