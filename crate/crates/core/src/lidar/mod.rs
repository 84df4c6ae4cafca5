//! LiDAR ground truth: NDVI masking, height filtering, pit-free CHM,
//! treetop detection, crown segmentation and truth rasterization.

mod chm;
mod cloud;
pub mod io;
mod segment;
mod treetops;
mod truth;

pub use chm::{naive_chm, pitfree_chm, PitFreeParams};
pub use cloud::{
    filter_height, mask_by_ndvi, Point, PointCloud, NDVI_THRESHOLD, Z_MAX_FT, Z_MIN_FT,
};
pub use segment::{dalponte_segment, CrownMap, DalponteParams};
pub use treetops::{local_maxima, TreeTop, DEFAULT_WINDOW_RADIUS};
pub use truth::rasterize_truth;
