use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};

/// North-up, square-pixel affine grid.
///
/// `origin_x`/`origin_y` locate the top-left corner of pixel (0, 0) in map
/// units. Rows grow southwards, columns eastwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    pub crs_tag: String,
}

impl GridGeometry {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        width: usize,
        height: usize,
        crs_tag: impl Into<String>,
    ) -> Result<Self> {
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(CanopyError::Config(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(CanopyError::Config(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(CanopyError::Config("grid origin must be finite".into()));
        }
        Ok(Self {
            origin_x,
            origin_y,
            pixel_size,
            width,
            height,
            crs_tag: crs_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_x(&self) -> f64 {
        self.origin_x
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.width as f64 * self.pixel_size
    }

    pub fn max_y(&self) -> f64 {
        self.origin_y
    }

    pub fn min_y(&self) -> f64 {
        self.origin_y - self.height as f64 * self.pixel_size
    }

    /// Map coordinates of the centre of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Fractional (row, col) of a map coordinate; integer parts index the
    /// containing pixel.
    pub fn fractional_index(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (self.origin_y - y) / self.pixel_size,
            (x - self.origin_x) / self.pixel_size,
        )
    }

    /// Pixel containing (x, y). Points on the east/south outer edge fall outside.
    pub fn pixel_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (fr, fc) = self.fractional_index(x, y);
        if !(fr >= 0.0 && fc >= 0.0) {
            return None;
        }
        let (r, c) = (fr.floor() as usize, fc.floor() as usize);
        (r < self.height && c < self.width).then_some((r, c))
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn alignable(&self, other: &GridGeometry) -> bool {
        self.crs_tag == other.crs_tag
    }

    pub fn ensure_alignable(&self, other: &GridGeometry) -> Result<()> {
        if self.alignable(other) {
            Ok(())
        } else {
            Err(CanopyError::Alignment(format!(
                "crs '{}' differs from '{}'",
                self.crs_tag, other.crs_tag
            )))
        }
    }

    /// Identical lattice and extent. Coordinates are compared with a tolerance
    /// of 1e-9 pixels to absorb decimal round-off from file headers.
    pub fn same_grid(&self, other: &GridGeometry) -> bool {
        let tol = 1e-9 * self.pixel_size;
        self.crs_tag == other.crs_tag
            && self.width == other.width
            && self.height == other.height
            && (self.pixel_size - other.pixel_size).abs() <= tol
            && (self.origin_x - other.origin_x).abs() <= tol
            && (self.origin_y - other.origin_y).abs() <= tol
    }

    pub fn ensure_same_grid(&self, other: &GridGeometry) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(CanopyError::Alignment(format!(
                "grid {} differs from {}",
                self.describe(),
                other.describe()
            )))
        }
    }

    /// Same geometry with a different pixel size over the same extent.
    /// Fails if the extent is not a whole number of the new pixels.
    pub fn with_pixel_size(&self, pixel_size: f64) -> Result<Self> {
        let w = (self.width as f64 * self.pixel_size) / pixel_size;
        let h = (self.height as f64 * self.pixel_size) / pixel_size;
        if (w - w.round()).abs() > 1e-6 || (h - h.round()).abs() > 1e-6 {
            return Err(CanopyError::Alignment(format!(
                "extent {}x{} is not a multiple of pixel size {pixel_size}",
                self.width as f64 * self.pixel_size,
                self.height as f64 * self.pixel_size
            )));
        }
        GridGeometry::new(
            self.origin_x,
            self.origin_y,
            pixel_size,
            w.round() as usize,
            h.round() as usize,
            self.crs_tag.clone(),
        )
    }

    /// Sub-grid covering the pixel window starting at (row0, col0).
    pub fn window(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<Self> {
        if row0 + height > self.height || col0 + width > self.width {
            return Err(CanopyError::Shape(format!(
                "window ({row0},{col0},{height},{width}) exceeds {}x{} grid",
                self.height, self.width
            )));
        }
        GridGeometry::new(
            self.origin_x + col0 as f64 * self.pixel_size,
            self.origin_y - row0 as f64 * self.pixel_size,
            self.pixel_size,
            width,
            height,
            self.crs_tag.clone(),
        )
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "[{} {}x{} @ {} origin ({}, {})]",
            self.crs_tag, self.width, self.height, self.pixel_size, self.origin_x, self.origin_y
        )
    }
}
