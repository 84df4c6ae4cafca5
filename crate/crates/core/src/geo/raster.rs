use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::GridGeometry;

/// Nodata sentinel for continuous layers (reflectance, NDVI, heights).
pub const NODATA: f32 = -9999.0;
/// Nodata sentinel for byte masks.
pub const MASK_NODATA: f32 = 255.0;

/// Georeferenced multi-band grid, stored band-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub geometry: GridGeometry,
    bands: usize,
    data: Vec<f32>,
    pub nodata: f32,
}

impl Raster {
    pub fn filled(geometry: GridGeometry, bands: usize, value: f32, nodata: f32) -> Self {
        assert!(bands >= 1, "a raster needs at least one band");
        let data = vec![value; geometry.len() * bands];
        Self {
            geometry,
            bands,
            data,
            nodata,
        }
    }

    pub fn nodata_filled(geometry: GridGeometry, bands: usize, nodata: f32) -> Self {
        Self::filled(geometry, bands, nodata, nodata)
    }

    pub fn from_data(
        geometry: GridGeometry,
        bands: usize,
        data: Vec<f32>,
        nodata: f32,
    ) -> Result<Self> {
        if bands == 0 {
            return Err(CanopyError::Shape("raster needs at least one band".into()));
        }
        if data.len() != geometry.len() * bands {
            return Err(CanopyError::Shape(format!(
                "{} values for {} band(s) of {}x{}",
                data.len(),
                bands,
                geometry.width,
                geometry.height
            )));
        }
        Ok(Self {
            geometry,
            bands,
            data,
            nodata,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.geometry.len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.geometry.len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Copy of a single band as its own raster.
    pub fn band_raster(&self, b: usize) -> Raster {
        Raster {
            geometry: self.geometry.clone(),
            bands: 1,
            data: self.band(b).to_vec(),
            nodata: self.nodata,
        }
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[band * self.geometry.len() + self.geometry.index(row, col)]
    }

    pub fn set(&mut self, band: usize, row: usize, col: usize, value: f32) {
        let i = band * self.geometry.len() + self.geometry.index(row, col);
        self.data[i] = value;
    }

    /// True for the sentinel and for NaN.
    pub fn is_nodata(&self, v: f32) -> bool {
        v == self.nodata || v.is_nan()
    }

    /// Value of band 0 at (row, col), `None` for nodata.
    pub fn value(&self, row: usize, col: usize) -> Option<f32> {
        let v = self.get(0, row, col);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn valid_count(&self, band: usize) -> usize {
        self.band(band).iter().filter(|v| !self.is_nodata(**v)).count()
    }

    pub(crate) fn require_single_band(&self, what: &str) -> Result<()> {
        if self.bands != 1 {
            return Err(CanopyError::Shape(format!(
                "{what} must be single-band, got {} bands",
                self.bands
            )));
        }
        Ok(())
    }
}

/// Ordered band roles for the MS configuration: NAIP 1 m, Sentinel-2 10 m, Sentinel-2 20 m.
pub const MS_ROLES: [&str; 14] = [
    "naip_red",
    "naip_green",
    "naip_blue",
    "naip_nir",
    "s2_10m_1",
    "s2_10m_2",
    "s2_10m_3",
    "s2_10m_4",
    "s2_20m_1",
    "s2_20m_2",
    "s2_20m_3",
    "s2_20m_4",
    "s2_20m_5",
    "s2_20m_6",
];

pub const RGB_ROLES: [&str; 3] = ["naip_red", "naip_green", "naip_blue"];

/// Which input bands a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandSet {
    Rgb,
    Ms14,
}

impl BandSet {
    pub fn roles(self) -> &'static [&'static str] {
        match self {
            BandSet::Rgb => &RGB_ROLES,
            BandSet::Ms14 => &MS_ROLES,
        }
    }

    pub fn count(self) -> usize {
        self.roles().len()
    }

    pub fn label(self) -> &'static str {
        match self {
            BandSet::Rgb => "RGB Only",
            BandSet::Ms14 => "14 MS Bands",
        }
    }

    pub fn from_count(n: usize) -> Option<Self> {
        [BandSet::Rgb, BandSet::Ms14].into_iter().find(|b| b.count() == n)
    }
}

impl std::str::FromStr for BandSet {
    type Err = CanopyError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(BandSet::Rgb),
            "ms14" | "ms" | "14" => Ok(BandSet::Ms14),
            _ => Err(CanopyError::Config(format!(
                "unknown band set '{s}' (expected rgb or ms14)"
            ))),
        }
    }
}

/// Bands sharing one geometry, each with a role label.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    pub raster: Raster,
    pub band_roles: Vec<String>,
}

impl RasterStack {
    pub fn geometry(&self) -> &GridGeometry {
        &self.raster.geometry
    }

    pub fn bands(&self) -> usize {
        self.raster.bands()
    }

    pub fn role_index(&self, role: &str) -> Option<usize> {
        self.band_roles.iter().position(|r| r == role)
    }
}
