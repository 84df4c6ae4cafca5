mod ascii_grid;
mod geotiff;
mod patch_file;

use std::path::Path;

pub use ascii_grid::{read_ascii_grid, write_ascii_grid};
pub use geotiff::{read_geotiff, write_geotiff, SampleType};
pub use patch_file::{read_patch_header, read_patches, write_patches, PATCH_MAGIC};

use crate::error::{CanopyError, Result};
use crate::geo::Raster;

fn is_ascii(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("asc"))
}

/// Read a raster, choosing the format from the extension (`.asc` or GeoTIFF).
pub fn read_raster(path: &Path) -> Result<Raster> {
    if is_ascii(path) {
        read_ascii_grid(path)
    } else {
        read_geotiff(path)
    }
}

/// Write a raster by extension. ASCII grids hold one band and ignore `sample`.
pub fn write_raster(path: &Path, raster: &Raster, sample: SampleType) -> Result<()> {
    if is_ascii(path) {
        write_ascii_grid(path, raster)
    } else {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff") => {
                write_geotiff(path, raster, sample)
            }
            _ => Err(CanopyError::Config(format!(
                "unknown raster extension for {}",
                path.display()
            ))),
        }
    }
}
