//! Canopy height models.
//!
//! [`naive_chm`] keeps the highest return per pixel. [`pitfree_chm`] stacks
//! TIN surfaces built from returns above a ladder of height thresholds and
//! keeps the per-pixel maximum, so that low returns penetrating the crown
//! cannot punch pits into the surface.

use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::{GridGeometry, Raster, NODATA};
use crate::lidar::{Point, PointCloud};

const FT_PER_M: f64 = 3.280_839_895;

pub fn naive_chm(cloud: &PointCloud, geometry: &GridGeometry) -> Raster {
    let mut out = Raster::nodata_filled(geometry.clone(), 1, NODATA);
    let data = out.data_mut();
    for p in &cloud.points {
        if let Some((r, c)) = geometry.pixel_of(p.x, p.y) {
            let slot = &mut data[geometry.index(r, c)];
            let z = p.z as f32;
            if *slot == NODATA || z > *slot {
                *slot = z;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitFreeParams {
    /// Ascending height thresholds, in the cloud's z units (feet).
    pub thresholds: Vec<f64>,
    /// Longest triangle edge kept, in map units: `[first layer, other layers]`.
    pub max_edge: [f64; 2],
}

impl Default for PitFreeParams {
    fn default() -> Self {
        Self {
            thresholds: [0.0, 2.0, 5.0, 10.0, 15.0]
                .iter()
                .map(|m| m * FT_PER_M)
                .collect(),
            max_edge: [1.5, 5.0],
        }
    }
}

impl PitFreeParams {
    fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(CanopyError::Config("pit-free needs at least one threshold".into()));
        }
        if self.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CanopyError::Config(format!(
                "pit-free thresholds must be strictly ascending: {:?}",
                self.thresholds
            )));
        }
        if self.max_edge.iter().any(|e| !(*e > 0.0)) {
            return Err(CanopyError::Config(format!(
                "max_edge must be positive: {:?}",
                self.max_edge
            )));
        }
        Ok(())
    }
}

/// Pit-free CHM.
///
/// Each threshold layer triangulates the returns with `z ≥ t`, drops
/// triangles with an edge longer than the layer's `max_edge` and rasterizes
/// the linear interpolant at pixel centres. The highest-return grid is
/// composited in as well, so the result is never below [`naive_chm`].
pub fn pitfree_chm(
    cloud: &PointCloud,
    geometry: &GridGeometry,
    params: &PitFreeParams,
) -> Result<Raster> {
    params.validate()?;
    if cloud.len() < 3 {
        return Err(CanopyError::Degenerate(format!(
            "pit-free CHM needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    let mut out = naive_chm(cloud, geometry);
    let mut any_triangle = false;
    for (i, &t) in params.thresholds.iter().enumerate() {
        let layer: Vec<&Point> = cloud.points.iter().filter(|p| p.z >= t).collect();
        if layer.len() < 3 {
            continue;
        }
        let max_edge = if i == 0 {
            params.max_edge[0]
        } else {
            params.max_edge[1]
        };
        any_triangle |= rasterize_tin(&layer, max_edge, geometry, out.data_mut());
    }
    if !any_triangle {
        return Err(CanopyError::Degenerate(
            "points are collinear or too sparse to triangulate".into(),
        ));
    }
    Ok(out)
}

/// Max-composite one TIN layer into `dst`. Returns whether the
/// triangulation produced any triangle at all.
fn rasterize_tin(points: &[&Point], max_edge: f64, g: &GridGeometry, dst: &mut [f32]) -> bool {
    let coords: Vec<delaunator::Point> = points
        .iter()
        .map(|p| delaunator::Point { x: p.x, y: p.y })
        .collect();
    let tri = delaunator::triangulate(&coords);
    if tri.triangles.is_empty() {
        return false;
    }
    let max_edge2 = max_edge * max_edge;
    let ps = g.pixel_size;
    for t in tri.triangles.chunks_exact(3) {
        let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
        let d2 = |p: &Point, q: &Point| (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
        if d2(a, b) > max_edge2 || d2(b, c) > max_edge2 || d2(c, a) > max_edge2 {
            continue;
        }
        let denom = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
        if denom.abs() < 1e-12 {
            continue;
        }
        let (min_x, max_x) = (a.x.min(b.x).min(c.x), a.x.max(b.x).max(c.x));
        let (min_y, max_y) = (a.y.min(b.y).min(c.y), a.y.max(b.y).max(c.y));
        // Pixel centres at origin + (i + 0.5) * ps.
        let c0 = ((min_x - g.origin_x) / ps - 0.5).ceil().max(0.0);
        let c1 = ((max_x - g.origin_x) / ps - 0.5).floor();
        let r0 = ((g.origin_y - max_y) / ps - 0.5).ceil().max(0.0);
        let r1 = ((g.origin_y - min_y) / ps - 0.5).floor();
        if c1 < c0 || r1 < r0 || c0 >= g.width as f64 || r0 >= g.height as f64 {
            continue;
        }
        let c1 = (c1 as usize).min(g.width - 1);
        let r1 = (r1 as usize).min(g.height - 1);
        for row in r0 as usize..=r1 {
            for col in c0 as usize..=c1 {
                let (px, py) = g.pixel_center(row, col);
                let l0 = ((b.y - c.y) * (px - c.x) + (c.x - b.x) * (py - c.y)) / denom;
                let l1 = ((c.y - a.y) * (px - c.x) + (a.x - c.x) * (py - c.y)) / denom;
                let l2 = 1.0 - l0 - l1;
                const EPS: f64 = -1e-12;
                if l0 < EPS || l1 < EPS || l2 < EPS {
                    continue;
                }
                let z = (l0 * a.z + l1 * b.z + l2 * c.z) as f32;
                let slot = &mut dst[g.index(row, col)];
                if *slot == NODATA || z > *slot {
                    *slot = z;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point { x, y, z }
    }

    fn grid(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(0.0, h as f64, 1.0, w, h, "t").unwrap()
    }

    #[test]
    fn naive_examples() {
        let g = grid(3, 3);
        let one = PointCloud::new(vec![p(1.5, 1.5, 30.0)]).unwrap();
        let chm = naive_chm(&one, &g);
        assert_eq!(chm.value(1, 1), Some(30.0));
        assert_eq!(chm.valid_count(0), 1);

        let two = PointCloud::new(vec![p(0.2, 2.8, 10.0), p(0.7, 2.1, 20.0)]).unwrap();
        assert_eq!(naive_chm(&two, &g).value(0, 0), Some(20.0));

        assert_eq!(naive_chm(&PointCloud::default(), &g).valid_count(0), 0);
    }

    #[test]
    fn constant_surface_inside_hull() {
        let g = grid(10, 10);
        let mut pts = Vec::new();
        for i in 0..=40 {
            for j in 0..=40 {
                pts.push(p(i as f64 * 0.25, j as f64 * 0.25, 30.0));
            }
        }
        let chm = pitfree_chm(&PointCloud::new(pts).unwrap(), &g, &PitFreeParams::default())
            .unwrap();
        assert!(chm.data().iter().all(|&v| v == 30.0));
    }

    #[test]
    fn empty_upper_layer_changes_nothing() {
        let g = grid(8, 8);
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                let (x, y) = (0.3 + i as f64 * 0.25, 0.2 + j as f64 * 0.26);
                pts.push(p(x, y, 10.0 + (x * 1.3).sin() * 3.0 + y));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let base = PitFreeParams {
            thresholds: vec![0.0],
            max_edge: [1.5, 5.0],
        };
        let with_empty = PitFreeParams {
            thresholds: vec![0.0, 500.0],
            max_edge: [1.5, 5.0],
        };
        assert_eq!(
            pitfree_chm(&cloud, &g, &base).unwrap(),
            pitfree_chm(&cloud, &g, &with_empty).unwrap()
        );
    }

    #[test]
    fn pit_is_filled() {
        let g = grid(6, 6);
        let mut pts = Vec::new();
        for i in 0..24 {
            for j in 0..24 {
                pts.push(p(0.125 + i as f64 * 0.25, 0.125 + j as f64 * 0.25, 40.0));
            }
        }
        // A pixel whose only returns penetrated deep into the crown.
        pts.retain(|q| !(q.x > 2.0 && q.x < 3.0 && q.y > 3.0 && q.y < 4.0));
        pts.push(p(2.5, 3.5, 8.0));
        let cloud = PointCloud::new(pts).unwrap();
        let naive = naive_chm(&cloud, &g);
        assert_eq!(naive.value(2, 2), Some(8.0));
        let pf = pitfree_chm(&cloud, &g, &PitFreeParams::default()).unwrap();
        assert_eq!(pf.value(2, 2), Some(40.0));
    }

    #[test]
    fn long_edges_leave_gaps() {
        let g = grid(10, 1);
        let cloud = PointCloud::new(vec![
            p(0.0, 0.0, 20.0),
            p(0.0, 1.0, 20.0),
            p(9.9, 0.0, 20.0),
            p(9.9, 1.0, 20.0),
        ])
        .unwrap();
        let params = PitFreeParams {
            thresholds: vec![0.0],
            max_edge: [1.5, 1.5],
        };
        let chm = pitfree_chm(&cloud, &g, &params).unwrap();
        assert_eq!(chm.value(0, 5), None);
    }

    #[test]
    fn degenerate_inputs() {
        let g = grid(4, 4);
        let two = PointCloud::new(vec![p(1.0, 1.0, 10.0), p(2.0, 2.0, 10.0)]).unwrap();
        assert!(matches!(
            pitfree_chm(&two, &g, &PitFreeParams::default()),
            Err(CanopyError::Degenerate(_))
        ));
        let line = PointCloud::new((0..5).map(|i| p(i as f64, i as f64, 10.0)).collect()).unwrap();
        assert!(matches!(
            pitfree_chm(&line, &g, &PitFreeParams::default()),
            Err(CanopyError::Degenerate(_))
        ));
        let bad = PitFreeParams {
            thresholds: vec![5.0, 2.0],
            max_edge: [1.5, 5.0],
        };
        let ok = PointCloud::new(vec![p(0.0, 0.0, 9.0), p(1.0, 0.0, 9.0), p(0.0, 1.0, 9.0)])
            .unwrap();
        assert!(matches!(pitfree_chm(&ok, &g, &bad), Err(CanopyError::Config(_))));
    }
}
