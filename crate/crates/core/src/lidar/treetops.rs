use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeTop {
    /// 1-based, assigned in row-major detection order.
    pub id: u32,
    pub row: usize,
    pub col: usize,
    pub height: f64,
}

/// Default search radius (map units) of the local-maximum filter.
pub const DEFAULT_WINDOW_RADIUS: f64 = 3.0;

/// Pixel offsets of a circular window of `radius` map units, excluding the centre.
pub(crate) fn circular_offsets(radius: f64, pixel_size: f64) -> Vec<(isize, isize)> {
    let reach = (radius / pixel_size).floor() as isize;
    let r2 = (radius / pixel_size).powi(2) + 1e-9;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if (dr, dc) != (0, 0) && ((dr * dr + dc * dc) as f64) <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Local-maximum treetop detection on a CHM.
///
/// A pixel is a top when its height is at least `min_height` and no pixel in
/// the circular window is higher. Among equal heights inside one window only
/// the earliest pixel in row-major order survives. Nodata pixels are ignored.
pub fn local_maxima(chm: &Raster, window_radius: f64, min_height: f64) -> Result<Vec<TreeTop>> {
    chm.require_single_band("CHM")?;
    let g = &chm.geometry;
    if !(window_radius >= g.pixel_size) {
        return Err(CanopyError::Config(format!(
            "window radius {window_radius} is smaller than the pixel size {}",
            g.pixel_size
        )));
    }
    let offsets = circular_offsets(window_radius, g.pixel_size);
    let (h, w) = (g.height as isize, g.width as isize);
    let mut tops = Vec::new();
    for row in 0..g.height {
        for col in 0..g.width {
            let Some(v) = chm.value(row, col) else { continue };
            if (v as f64) < min_height {
                continue;
            }
            let is_top = offsets.iter().all(|&(dr, dc)| {
                let (nr, nc) = (row as isize + dr, col as isize + dc);
                if nr < 0 || nc < 0 || nr >= h || nc >= w {
                    return true;
                }
                match chm.value(nr as usize, nc as usize) {
                    None => true,
                    Some(n) if n > v => false,
                    Some(n) if n == v => !(dr < 0 || (dr == 0 && dc < 0)),
                    Some(_) => true,
                }
            });
            if is_top {
                tops.push(TreeTop {
                    id: tops.len() as u32 + 1,
                    row,
                    col,
                    height: v as f64,
                });
            }
        }
    }
    Ok(tops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GridGeometry, NODATA};

    fn chm(w: usize, h: usize, data: Vec<f32>) -> Raster {
        let g = GridGeometry::new(0.0, h as f64, 1.0, w, h, "t").unwrap();
        Raster::from_data(g, 1, data, NODATA).unwrap()
    }

    /// Exhaustive oracle: compare every pixel against every other pixel
    /// within the radius, applying the same tie rule.
    fn oracle(c: &Raster, radius: f64, min_h: f64) -> Vec<(usize, usize)> {
        let g = &c.geometry;
        let mut out = Vec::new();
        for r in 0..g.height {
            for col in 0..g.width {
                let Some(v) = c.value(r, col) else { continue };
                if (v as f64) < min_h {
                    continue;
                }
                let mut ok = true;
                for r2 in 0..g.height {
                    for c2 in 0..g.width {
                        let d2 = (r2 as f64 - r as f64).powi(2) + (c2 as f64 - col as f64).powi(2);
                        if (r2, c2) == (r, col) || d2 > radius * radius + 1e-9 {
                            continue;
                        }
                        if let Some(n) = c.value(r2, c2) {
                            let earlier = (r2, c2) < (r, col);
                            if n > v || (n == v && earlier) {
                                ok = false;
                            }
                        }
                    }
                }
                if ok {
                    out.push((r, col));
                }
            }
        }
        out
    }

    #[test]
    fn unique_global_maximum() {
        let mut data = vec![10.0; 25];
        data[13] = 30.0;
        let tops = local_maxima(&chm(5, 5, data), 10.0, 6.0).unwrap();
        assert_eq!(tops.len(), 1);
        assert_eq!((tops[0].row, tops[0].col, tops[0].height), (2, 3, 30.0));
        assert_eq!(tops[0].id, 1);
    }

    #[test]
    fn equal_peaks_keep_the_first() {
        let mut data = vec![7.0; 25];
        data[6] = 20.0; // (1,1)
        data[8] = 20.0; // (1,3)
        let c = chm(5, 5, data);
        let tops = local_maxima(&c, 2.0, 6.0).unwrap();
        let got: Vec<_> = tops.iter().map(|t| (t.row, t.col)).collect();
        assert_eq!(got, vec![(1, 1)]);
        assert_eq!(got, oracle(&c, 2.0, 6.0));
    }

    #[test]
    fn below_min_height_is_empty() {
        let c = chm(3, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!(local_maxima(&c, 1.0, 6.0).unwrap().is_empty());
    }

    #[test]
    fn nodata_neighbours_ignored() {
        let c = chm(3, 1, vec![NODATA, 9.0, NODATA]);
        assert_eq!(local_maxima(&c, 1.0, 6.0).unwrap().len(), 1);
    }

    #[test]
    fn radius_smaller_than_pixel_rejected() {
        let c = chm(1, 1, vec![9.0]);
        assert!(local_maxima(&c, 0.5, 6.0).is_err());
    }

    #[test]
    fn matches_oracle_on_random_surfaces() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let data: Vec<f32> = (0..12 * 9)
                .map(|_| {
                    if rng.gen_bool(0.05) {
                        NODATA
                    } else {
                        // Coarse values so that ties are common.
                        rng.gen_range(0..8) as f32 * 3.0
                    }
                })
                .collect();
            let c = chm(12, 9, data);
            let radius = rng.gen_range(1.0..3.5);
            let tops: Vec<_> = local_maxima(&c, radius, 6.0)
                .unwrap()
                .iter()
                .map(|t| (t.row, t.col))
                .collect();
            assert_eq!(tops, oracle(&c, radius, 6.0));
            for &(r, col) in &tops {
                let v = c.value(r, col).unwrap();
                for (dr, dc) in circular_offsets(radius, 1.0) {
                    let (nr, nc) = (r as isize + dr, col as isize + dc);
                    if nr >= 0 && nc >= 0 && nr < 9 && nc < 12 {
                        if let Some(n) = c.value(nr as usize, nc as usize) {
                            assert!(v >= n);
                        }
                    }
                }
            }
        }
    }
}
