//! Raster data model and the grid operations used to fuse imagery into
//! training patches.

mod grid;
pub mod io;
mod ops;
mod patch;
mod raster;

pub use grid::GridGeometry;
pub use ops::{mosaic, ndvi, resample_to, stack, MosaicReducer, Resampling};
pub use patch::{
    extract_patches, fill_nodata, normalize, normalize_height, window_origins, BandStats,
    NormalizeWarning, Patch, PatchSample, PatchTargets, DEFAULT_PATCH_SIZE,
};
pub use raster::{BandSet, Raster, RasterStack, MASK_NODATA, MS_ROLES, NODATA, RGB_ROLES};
