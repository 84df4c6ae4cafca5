use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::ZonePolygon;
use crate::error::{CanopyError, Result};
use crate::geo::{Raster, NODATA};

/// Mask values at or above this count as tree.
const MASK_CUT: f32 = 0.5;

fn check_pair(mask: &Raster, other: &Raster) -> Result<()> {
    mask.require_single_band("mask")?;
    other.require_single_band("height raster")?;
    mask.geometry.ensure_same_grid(&other.geometry)
}

/// Keep predicted height on tree pixels, zero elsewhere. Nodata in either
/// input stays nodata.
pub fn canopy_height(mask: &Raster, height: &Raster) -> Result<Raster> {
    check_pair(mask, height)?;
    let data = mask
        .data()
        .iter()
        .zip(height.data())
        .map(|(&m, &h)| {
            if mask.is_nodata(m) || height.is_nodata(h) {
                NODATA
            } else if m >= MASK_CUT {
                h
            } else {
                0.0
            }
        })
        .collect();
    Raster::from_data(height.geometry.clone(), 1, data, NODATA)
}

/// Fraction of valid pixels that are tree.
pub fn citywide_cover(mask: &Raster) -> Result<f64> {
    mask.require_single_band("mask")?;
    let (mut ones, mut valid) = (0usize, 0usize);
    for &v in mask.data() {
        if !mask.is_nodata(v) {
            valid += 1;
            ones += (v >= MASK_CUT) as usize;
        }
    }
    if valid == 0 {
        return Err(CanopyError::Degenerate("mask has no valid pixels".into()));
    }
    Ok(ones as f64 / valid as f64)
}

/// Percentage with one decimal, e.g. `0.059` → `"5.9%"`.
pub fn format_cover(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneStats {
    pub zone_id: String,
    /// Valid mask pixels whose centre lies in the zone.
    pub pixel_count: usize,
    /// `None` when the zone holds no valid pixel.
    pub tree_cover: Option<f64>,
    /// Mean canopy height over tree pixels; `None` without tree pixels.
    pub mean_canopy_height: Option<f64>,
}

/// Per-zone result; invalid polygons yield an error record instead of
/// aborting the run.
#[derive(Debug, Clone, PartialEq)]
pub enum ZoneOutcome {
    Stats(ZoneStats),
    Invalid { zone_id: String, reason: String },
}

impl ZoneOutcome {
    pub fn zone_id(&self) -> &str {
        match self {
            ZoneOutcome::Stats(s) => &s.zone_id,
            ZoneOutcome::Invalid { zone_id, .. } => zone_id,
        }
    }

    pub fn stats(&self) -> Option<&ZoneStats> {
        match self {
            ZoneOutcome::Stats(s) => Some(s),
            ZoneOutcome::Invalid { .. } => None,
        }
    }
}

/// Cover and mean canopy height per zone, in input order. A pixel belongs
/// to a zone when its centre is inside under the even-odd rule; overlapping
/// zones each count shared pixels.
pub fn zonal_stats(mask: &Raster, canopy: &Raster, zones: &[ZonePolygon]) -> Result<Vec<ZoneOutcome>> {
    check_pair(mask, canopy)?;
    Ok(zones
        .par_iter()
        .map(|zone| match zone.validate() {
            Err(reason) => ZoneOutcome::Invalid {
                zone_id: zone.id.clone(),
                reason,
            },
            Ok(()) => ZoneOutcome::Stats(one_zone(mask, canopy, zone)),
        })
        .collect())
}

fn one_zone(mask: &Raster, canopy: &Raster, zone: &ZonePolygon) -> ZoneStats {
    let g = &mask.geometry;
    let (x0, y0, x1, y1) = zone.bounds();
    // Candidate pixels: centres within the zone's bounding box.
    let col_lo = ((x0 - g.origin_x) / g.pixel_size - 0.5).ceil().max(0.0) as usize;
    let col_hi = ((x1 - g.origin_x) / g.pixel_size - 0.5).floor().min(g.width as f64 - 1.0);
    let row_lo = ((g.origin_y - y1) / g.pixel_size - 0.5).ceil().max(0.0) as usize;
    let row_hi = ((g.origin_y - y0) / g.pixel_size - 0.5).floor().min(g.height as f64 - 1.0);
    let (mut count, mut trees, mut height_sum) = (0usize, 0usize, 0.0f64);
    if col_hi >= 0.0 && row_hi >= 0.0 {
        for r in row_lo..=row_hi as usize {
            for c in col_lo..=col_hi as usize {
                let (x, y) = g.pixel_center(r, c);
                if !zone.contains(x, y) {
                    continue;
                }
                let Some(m) = mask.value(r, c) else { continue };
                count += 1;
                if m >= MASK_CUT {
                    trees += 1;
                    if let Some(h) = canopy.value(r, c) {
                        height_sum += h as f64;
                    }
                }
            }
        }
    }
    ZoneStats {
        zone_id: zone.id.clone(),
        pixel_count: count,
        tree_cover: (count > 0).then(|| trees as f64 / count as f64),
        mean_canopy_height: (trees > 0).then(|| height_sum / trees as f64),
    }
}

/// `zone_id,pixel_count,tree_cover,mean_canopy_height`, one row per zone.
/// Missing statistics and invalid zones leave fields empty. Heights are
/// multiplied by `height_scale` (1 keeps normalised units).
pub fn zone_stats_csv(outcomes: &[ZoneOutcome], height_scale: f64) -> String {
    let mut out = String::from("zone_id,pixel_count,tree_cover,mean_canopy_height\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for o in outcomes {
        let id = csv_field(o.zone_id());
        let _ = match o {
            ZoneOutcome::Stats(s) => writeln!(
                out,
                "{id},{},{},{}",
                s.pixel_count,
                opt(s.tree_cover),
                opt(s.mean_canopy_height.map(|h| h * height_scale))
            ),
            ZoneOutcome::Invalid { .. } => writeln!(out, "{id},,,"),
        };
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GridGeometry;

    fn grid(w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(0.0, h as f64, 1.0, w, h, "t").unwrap()
    }

    fn square(x0: f64, y0: f64, w: f64, h: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h], [x0, y0]]
    }

    #[test]
    fn canopy_height_examples() {
        let g = grid(2, 2);
        let h = Raster::from_data(g.clone(), 1, vec![0.3, 0.5, 0.7, 0.9], NODATA).unwrap();
        let ones = Raster::from_data(g.clone(), 1, vec![1.0; 4], NODATA).unwrap();
        assert_eq!(canopy_height(&ones, &h).unwrap().data(), h.data());
        let zeros = Raster::from_data(g.clone(), 1, vec![0.0; 4], NODATA).unwrap();
        assert_eq!(canopy_height(&zeros, &h).unwrap().data(), &[0.0; 4]);
        let mixed = Raster::from_data(g.clone(), 1, vec![1.0, 0.0, 0.0, 1.0], NODATA).unwrap();
        let want: Vec<f32> = mixed.data().iter().zip(h.data()).map(|(m, v)| m * v).collect();
        assert_eq!(canopy_height(&mixed, &h).unwrap().data(), &want[..]);
        let other = Raster::from_data(grid(4, 1), 1, vec![0.0; 4], NODATA).unwrap();
        assert!(canopy_height(&other, &h).is_err());
    }

    #[test]
    fn cover_examples() {
        let g = grid(1000, 1);
        let data: Vec<f32> = (0..1000).map(|i| (i < 59) as u8 as f32).collect();
        let m = Raster::from_data(g, 1, data, 255.0).unwrap();
        let f = citywide_cover(&m).unwrap();
        assert_eq!(f, 0.059);
        assert_eq!(format_cover(f), "5.9%");
        let all = Raster::from_data(grid(3, 3), 1, vec![1.0; 9], 255.0).unwrap();
        assert_eq!(citywide_cover(&all).unwrap(), 1.0);
        let none = Raster::from_data(grid(2, 1), 1, vec![255.0; 2], 255.0).unwrap();
        assert!(citywide_cover(&none).is_err());
    }

    #[test]
    fn zones_cover_and_partition() {
        let g = grid(6, 4);
        let mask_data: Vec<f32> = (0..24).map(|i| (i % 3 == 0) as u8 as f32).collect();
        let mask = Raster::from_data(g.clone(), 1, mask_data, 255.0).unwrap();
        let h = Raster::from_data(g.clone(), 1, (0..24).map(|i| i as f32 * 0.01).collect(), NODATA).unwrap();
        let ch = canopy_height(&mask, &h).unwrap();
        let whole = ZonePolygon::simple("all", square(-1.0, -1.0, 8.0, 6.0));
        let left = ZonePolygon::simple("left", square(0.0, 0.0, 2.5, 4.0));
        let right = ZonePolygon::simple("right", square(2.5, 0.0, 3.5, 4.0));
        let empty = ZonePolygon::simple("far", square(100.0, 100.0, 1.0, 1.0));
        let bad = ZonePolygon::simple("bad", vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
        let out = zonal_stats(&mask, &ch, &[whole, left, right, empty, bad]).unwrap();
        let s: Vec<&ZoneStats> = out.iter().filter_map(ZoneOutcome::stats).collect();
        assert_eq!(s[0].pixel_count, 24);
        assert_eq!(s[0].tree_cover, Some(citywide_cover(&mask).unwrap()));
        assert_eq!(s[1].pixel_count + s[2].pixel_count, 24);
        assert_eq!(s[3].pixel_count, 0);
        assert_eq!(s[3].tree_cover, None);
        assert!(matches!(out[4], ZoneOutcome::Invalid { .. }));
        let csv = zone_stats_csv(&out, 1.0);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(4).unwrap().starts_with("far,0,,"));
    }
}
