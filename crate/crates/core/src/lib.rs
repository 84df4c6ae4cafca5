//! Tree cover and canopy height from LiDAR and multi-spectral imagery.
//!
//! The crate covers the whole chain:
//!
//! - [`lidar`] turns a height-normalised point cloud and an NDVI layer into
//!   tree-mask and pixel-height rasters (pit-free CHM, local-maximum
//!   treetops, region-growing crown segmentation).
//! - [`geo`] holds the raster model plus resampling, mosaicking, stacking and
//!   240×240 patch extraction, with GeoTIFF / ASCII grid / patch-file I/O.
//! - [`nn`] and [`train`] implement a multi-task UNet (tree mask, pixel
//!   height, impervious auxiliary mask) with Jaccard and MSE losses and Adam.
//! - [`eval`] scores models with IoU and MAE and builds the variant report.
//! - [`aggregate`] masks predicted heights and computes city-wide and
//!   per-zone canopy statistics.
//! - [`synth`] generates synthetic scenes with known trees, and [`pipeline`]
//!   wires everything into the `canopy` command line tool.

pub mod aggregate;
pub mod error;
pub mod eval;
pub mod geo;
pub mod lidar;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use error::{CanopyError, Result};
