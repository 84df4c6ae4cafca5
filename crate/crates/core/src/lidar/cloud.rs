use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::Raster;

/// One return: planar map coordinates plus height above ground (feet).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Height-normalised LiDAR returns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points
            .iter()
            .find(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(CanopyError::Degenerate(format!("non-finite point {p:?}")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// NDVI above which a pixel counts as vegetation.
pub const NDVI_THRESHOLD: f64 = 0.05;
/// Returns below this height (ft) are shrubs or ground.
pub const Z_MIN_FT: f64 = 6.0;
/// Returns above this height (ft) are birds, wires and other noise.
pub const Z_MAX_FT: f64 = 80.0;

/// Keep points whose containing NDVI pixel is strictly above `threshold`.
/// Points over nodata or outside the raster are dropped. The comparison runs
/// in the raster's f32 precision so a stored 0.05 does not pass a 0.05 cut.
pub fn mask_by_ndvi(cloud: &PointCloud, ndvi: &Raster, threshold: f64) -> Result<PointCloud> {
    ndvi.require_single_band("NDVI raster")?;
    let g = &ndvi.geometry;
    let points = cloud
        .points
        .iter()
        .filter(|p| {
            g.pixel_of(p.x, p.y)
                .and_then(|(r, c)| ndvi.value(r, c))
                .is_some_and(|v| v > threshold as f32)
        })
        .copied()
        .collect();
    Ok(PointCloud { points })
}

/// Keep points with `zmin ≤ z ≤ zmax`.
pub fn filter_height(cloud: &PointCloud, zmin: f64, zmax: f64) -> Result<PointCloud> {
    if !(zmin <= zmax) {
        return Err(CanopyError::Config(format!(
            "height filter needs zmin ≤ zmax, got [{zmin}, {zmax}]"
        )));
    }
    Ok(PointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| p.z >= zmin && p.z <= zmax)
            .copied()
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GridGeometry, NODATA};
    use proptest::prelude::*;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point { x, y, z }
    }

    fn ndvi_grid() -> Raster {
        let g = GridGeometry::new(0.0, 2.0, 1.0, 2, 2, "t").unwrap();
        Raster::from_data(g, 1, vec![0.06, 0.05, NODATA, -0.3], NODATA).unwrap()
    }

    #[test]
    fn ndvi_mask_examples() {
        let cloud = PointCloud::new(vec![
            p(0.5, 1.5, 30.0),
            p(1.5, 1.5, 30.0),
            p(0.5, 0.5, 30.0),
            p(1.5, 0.5, 30.0),
            p(5.0, 5.0, 30.0),
        ])
        .unwrap();
        let kept = mask_by_ndvi(&cloud, &ndvi_grid(), NDVI_THRESHOLD).unwrap();
        assert_eq!(kept.points, vec![p(0.5, 1.5, 30.0)]);
    }

    #[test]
    fn ndvi_mask_identity_at_minus_one() {
        let g = GridGeometry::new(0.0, 2.0, 1.0, 2, 2, "t").unwrap();
        let ndvi = Raster::from_data(g, 1, vec![0.3, -0.5, 0.0, 0.9], NODATA).unwrap();
        let cloud = PointCloud::new(vec![p(0.1, 0.1, 1.0), p(1.9, 1.9, 2.0), p(1.2, 0.3, 3.0)])
            .unwrap();
        assert_eq!(mask_by_ndvi(&cloud, &ndvi, -1.0).unwrap(), cloud);
    }

    #[test]
    fn height_filter_examples() {
        let cloud = PointCloud::new(vec![
            p(0.0, 0.0, 3.0),
            p(0.0, 0.0, 6.0),
            p(0.0, 0.0, 80.0),
            p(0.0, 0.0, 85.0),
        ])
        .unwrap();
        let kept = filter_height(&cloud, Z_MIN_FT, Z_MAX_FT).unwrap();
        let z: Vec<f64> = kept.points.iter().map(|p| p.z).collect();
        assert_eq!(z, vec![6.0, 80.0]);
        assert!(matches!(
            filter_height(&cloud, 10.0, 5.0),
            Err(CanopyError::Config(_))
        ));
    }

    #[test]
    fn rejects_non_finite_points() {
        assert!(PointCloud::new(vec![p(f64::NAN, 0.0, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn height_filter_idempotent(zs in prop::collection::vec(-10.0f64..100.0, 0..64)) {
            let cloud = PointCloud::new(zs.iter().map(|&z| p(0.0, 0.0, z)).collect()).unwrap();
            let once = filter_height(&cloud, Z_MIN_FT, Z_MAX_FT).unwrap();
            let twice = filter_height(&once, Z_MIN_FT, Z_MAX_FT).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn ndvi_mask_never_grows(
            pts in prop::collection::vec((-1.0f64..3.0, -1.0f64..3.0), 0..64),
            t in -1.0f64..1.0,
        ) {
            let cloud = PointCloud::new(pts.iter().map(|&(x, y)| p(x, y, 10.0)).collect()).unwrap();
            let kept = mask_by_ndvi(&cloud, &ndvi_grid(), t).unwrap();
            prop_assert!(kept.len() <= cloud.len());
        }
    }
}
