//! Per-pixel raster operations: NDVI, resampling onto a target grid,
//! mosaicking and band stacking.

use serde::{Deserialize, Serialize};

use crate::error::{CanopyError, Result};
use crate::geo::{GridGeometry, Raster, RasterStack, NODATA};

/// (NIR − Red) / (NIR + Red). Zero-sum pixels and nodata inputs map to nodata.
pub fn ndvi(nir: &Raster, red: &Raster) -> Result<Raster> {
    nir.require_single_band("nir")?;
    red.require_single_band("red")?;
    nir.geometry.ensure_same_grid(&red.geometry)?;
    let data = nir
        .data()
        .iter()
        .zip(red.data())
        .map(|(&n, &r)| {
            if nir.is_nodata(n) || red.is_nodata(r) {
                return NODATA;
            }
            let (n, r) = (n as f64, r as f64);
            let sum = n + r;
            if sum == 0.0 {
                NODATA
            } else {
                ((n - r) / sum).clamp(-1.0, 1.0) as f32
            }
        })
        .collect();
    Raster::from_data(nir.geometry.clone(), 1, data, NODATA)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    Nearest,
    #[default]
    Bilinear,
}

/// Resample every band of `src` onto `target`. Target pixels whose centre
/// falls outside the source extent become nodata.
pub fn resample_to(src: &Raster, target: &GridGeometry, method: Resampling) -> Result<Raster> {
    src.geometry.ensure_alignable(target)?;
    let sg = &src.geometry;
    let mut out = Raster::nodata_filled(target.clone(), src.bands(), src.nodata);
    let n_out = target.len();
    for b in 0..src.bands() {
        let band = src.band(b);
        let dst = &mut out.data_mut()[b * n_out..(b + 1) * n_out];
        for row in 0..target.height {
            for col in 0..target.width {
                let (x, y) = target.pixel_center(row, col);
                let (fr, fc) = sg.fractional_index(x, y);
                if !(fr >= 0.0 && fc >= 0.0 && fr < sg.height as f64 && fc < sg.width as f64) {
                    continue;
                }
                let v = match method {
                    Resampling::Nearest => {
                        let v = band[sg.index(fr as usize, fc as usize)];
                        if src.is_nodata(v) {
                            None
                        } else {
                            Some(v)
                        }
                    }
                    Resampling::Bilinear => bilinear(src, band, fr - 0.5, fc - 0.5),
                };
                if let Some(v) = v {
                    dst[target.index(row, col)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Bilinear interpolation between source pixel centres at continuous
/// centre-space position (y, x). Positions between the outermost centres and
/// the raster edge are clamped to the edge centres.
fn bilinear(src: &Raster, band: &[f32], y: f64, x: f64) -> Option<f32> {
    let g = &src.geometry;
    let y = y.clamp(0.0, (g.height - 1) as f64);
    let x = x.clamp(0.0, (g.width - 1) as f64);
    let r0 = y.floor() as usize;
    let c0 = x.floor() as usize;
    let r1 = (r0 + 1).min(g.height - 1);
    let c1 = (c0 + 1).min(g.width - 1);
    let wy = y - r0 as f64;
    let wx = x - c0 as f64;
    let taps = [
        (r0, c0, (1.0 - wy) * (1.0 - wx)),
        (r0, c1, (1.0 - wy) * wx),
        (r1, c0, wy * (1.0 - wx)),
        (r1, c1, wy * wx),
    ];
    let mut acc = 0.0f64;
    for (r, c, w) in taps {
        if w == 0.0 {
            continue;
        }
        let v = band[g.index(r, c)];
        if src.is_nodata(v) {
            return None;
        }
        acc += w * v as f64;
    }
    Some(acc as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MosaicReducer {
    /// Earliest tile in the input list with a valid value wins.
    #[default]
    First,
    Max,
}

/// Merge tiles lying on one pixel lattice into their bounding grid.
pub fn mosaic(tiles: &[Raster], reducer: MosaicReducer) -> Result<Raster> {
    let first = tiles
        .first()
        .ok_or_else(|| CanopyError::Degenerate("mosaic of zero tiles".into()))?;
    let ps = first.geometry.pixel_size;
    let bands = first.bands();
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in tiles {
        first.geometry.ensure_alignable(&t.geometry)?;
        if (t.geometry.pixel_size - ps).abs() > 1e-9 * ps {
            return Err(CanopyError::Alignment(format!(
                "pixel size {} differs from {ps}",
                t.geometry.pixel_size
            )));
        }
        if t.bands() != bands {
            return Err(CanopyError::Shape(format!(
                "tile has {} bands, expected {bands}",
                t.bands()
            )));
        }
        min_x = min_x.min(t.geometry.min_x());
        max_x = max_x.max(t.geometry.max_x());
        min_y = min_y.min(t.geometry.min_y());
        max_y = max_y.max(t.geometry.max_y());
    }
    let width = ((max_x - min_x) / ps).round() as usize;
    let height = ((max_y - min_y) / ps).round() as usize;
    let geometry = GridGeometry::new(
        min_x,
        max_y,
        ps,
        width,
        height,
        first.geometry.crs_tag.clone(),
    )?;
    let mut out = Raster::nodata_filled(geometry.clone(), bands, first.nodata);
    let n_out = geometry.len();
    for t in tiles {
        let col_off = lattice_offset(t.geometry.origin_x - min_x, ps)?;
        let row_off = lattice_offset(max_y - t.geometry.origin_y, ps)?;
        let tg = &t.geometry;
        for b in 0..bands {
            let src = t.band(b);
            let dst = &mut out.data_mut()[b * n_out..(b + 1) * n_out];
            for r in 0..tg.height {
                for c in 0..tg.width {
                    let v = src[tg.index(r, c)];
                    if t.is_nodata(v) {
                        continue;
                    }
                    let slot = &mut dst[geometry.index(r + row_off, c + col_off)];
                    let empty = *slot == first.nodata || slot.is_nan();
                    match reducer {
                        MosaicReducer::First if empty => *slot = v,
                        MosaicReducer::First => {}
                        MosaicReducer::Max if empty || v > *slot => *slot = v,
                        MosaicReducer::Max => {}
                    }
                }
            }
        }
    }
    Ok(out)
}

fn lattice_offset(distance: f64, ps: f64) -> Result<usize> {
    let k = distance / ps;
    if (k - k.round()).abs() > 1e-6 {
        return Err(CanopyError::Alignment(format!(
            "tile offset {distance} is not a whole number of {ps} pixels"
        )));
    }
    Ok(k.round() as usize)
}

/// Concatenate bands of rasters sharing one grid.
///
/// `roles` must name every output band. Nodata of later inputs is rewritten
/// to the first input's sentinel.
pub fn stack<S: AsRef<str>>(rasters: &[&Raster], roles: &[S]) -> Result<RasterStack> {
    let first = rasters
        .first()
        .ok_or_else(|| CanopyError::Degenerate("stack of zero rasters".into()))?;
    let total: usize = rasters.iter().map(|r| r.bands()).sum();
    if roles.len() != total {
        return Err(CanopyError::Shape(format!(
            "{} roles for {total} bands",
            roles.len()
        )));
    }
    let mut data = Vec::with_capacity(total * first.geometry.len());
    for r in rasters {
        first.geometry.ensure_same_grid(&r.geometry)?;
        data.extend(r.data().iter().map(|&v| {
            if r.is_nodata(v) {
                first.nodata
            } else {
                v
            }
        }));
    }
    Ok(RasterStack {
        raster: Raster::from_data(first.geometry.clone(), total, data, first.nodata)?,
        band_roles: roles.iter().map(|s| s.as_ref().to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{MS_ROLES, RGB_ROLES};

    fn grid(ox: f64, oy: f64, ps: f64, w: usize, h: usize) -> GridGeometry {
        GridGeometry::new(ox, oy, ps, w, h, "local").unwrap()
    }

    fn single(g: GridGeometry, v: Vec<f32>) -> Raster {
        Raster::from_data(g, 1, v, NODATA).unwrap()
    }

    #[test]
    fn ndvi_examples() {
        let g = grid(0.0, 1.0, 1.0, 3, 1);
        let nir = single(g.clone(), vec![0.6, 0.4, 0.1]);
        let red = single(g, vec![0.2, 0.4, 0.3]);
        let n = ndvi(&nir, &red).unwrap();
        assert!((n.data()[0] - 0.5).abs() < 1e-6);
        assert_eq!(n.data()[1], 0.0);
        assert!((n.data()[2] + 0.5).abs() < 1e-6);
        assert!(n.data()[2] < 0.0, "impervious pixels have NDVI < 0");
    }

    #[test]
    fn ndvi_zero_sum_and_nodata() {
        let g = grid(0.0, 1.0, 1.0, 2, 1);
        let nir = single(g.clone(), vec![0.0, NODATA]);
        let red = single(g, vec![0.0, 0.5]);
        let n = ndvi(&nir, &red).unwrap();
        assert_eq!(n.data(), &[NODATA, NODATA]);
    }

    #[test]
    fn ndvi_rejects_misaligned() {
        let nir = single(grid(0.0, 1.0, 1.0, 2, 1), vec![0.1, 0.2]);
        let red = single(grid(1.0, 1.0, 1.0, 2, 1), vec![0.1, 0.2]);
        assert!(matches!(ndvi(&nir, &red), Err(CanopyError::Alignment(_))));
    }

    #[test]
    fn resample_constant_field() {
        let src = Raster::filled(grid(0.0, 40.0, 20.0, 2, 2), 1, 3.25, NODATA);
        let target = grid(0.0, 40.0, 1.0, 40, 40);
        for m in [Resampling::Nearest, Resampling::Bilinear] {
            let out = resample_to(&src, &target, m).unwrap();
            assert!(out.data().iter().all(|&v| v == 3.25));
        }
    }

    #[test]
    fn nearest_blocks_match_centre_containment() {
        let src = single(grid(0.0, 40.0, 20.0, 2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let target = grid(0.0, 40.0, 1.0, 40, 40);
        let out = resample_to(&src, &target, Resampling::Nearest).unwrap();
        // Oracle: a target centre (c+0.5, 40-(r+0.5)) lies in source pixel
        // (floor((r+0.5)/20), floor((c+0.5)/20)).
        for r in 0..40 {
            for c in 0..40 {
                let sr = ((r as f64 + 0.5) / 20.0).floor() as usize;
                let sc = ((c as f64 + 0.5) / 20.0).floor() as usize;
                assert_eq!(out.get(0, r, c), src.get(0, sr, sc));
            }
        }
    }

    #[test]
    fn bilinear_midpoint() {
        let src = single(grid(0.0, 2.0, 1.0, 2, 2), vec![0.0, 0.0, 1.0, 1.0]);
        // One target pixel whose centre is (1, 1), the midpoint of the four centres.
        let target = grid(0.5, 1.5, 1.0, 1, 1);
        let out = resample_to(&src, &target, Resampling::Bilinear).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn resample_outside_extent_is_nodata() {
        let src = Raster::filled(grid(0.0, 2.0, 1.0, 2, 2), 1, 1.0, NODATA);
        let target = grid(1.0, 2.0, 1.0, 3, 1);
        let out = resample_to(&src, &target, Resampling::Nearest).unwrap();
        assert_eq!(out.data(), &[1.0, NODATA, NODATA]);
    }

    #[test]
    fn resample_crs_mismatch() {
        let src = Raster::filled(grid(0.0, 2.0, 1.0, 2, 2), 1, 1.0, NODATA);
        let target = GridGeometry::new(0.0, 2.0, 1.0, 2, 2, "other").unwrap();
        assert!(matches!(
            resample_to(&src, &target, Resampling::Nearest),
            Err(CanopyError::Alignment(_))
        ));
    }

    #[test]
    fn bilinear_propagates_nodata() {
        let src = single(grid(0.0, 2.0, 1.0, 2, 2), vec![0.0, NODATA, 1.0, 1.0]);
        let target = grid(0.5, 1.5, 1.0, 1, 1);
        let out = resample_to(&src, &target, Resampling::Bilinear).unwrap();
        assert_eq!(out.data(), &[NODATA]);
    }

    #[test]
    fn mosaic_identity_and_gap() {
        let a = single(grid(0.0, 2.0, 1.0, 2, 2), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mosaic(&[a.clone()], MosaicReducer::First).unwrap(), a);

        let b = single(grid(3.0, 2.0, 1.0, 1, 2), vec![5.0, 6.0]);
        let m = mosaic(&[a, b], MosaicReducer::First).unwrap();
        assert_eq!((m.width(), m.height()), (4, 2));
        assert_eq!(m.data(), &[1.0, 2.0, NODATA, 5.0, 3.0, 4.0, NODATA, 6.0]);
    }

    #[test]
    fn mosaic_overlap_reducers() {
        let a = Raster::filled(grid(0.0, 2.0, 1.0, 2, 2), 1, 3.0, NODATA);
        let b = Raster::filled(grid(1.0, 2.0, 1.0, 2, 2), 1, 7.0, NODATA);
        let m = mosaic(&[a.clone(), b.clone()], MosaicReducer::Max).unwrap();
        // Brute-force oracle: max over tiles covering each output pixel.
        for r in 0..2 {
            for c in 0..3 {
                let mut best: Option<f32> = None;
                for t in [&a, &b] {
                    let (x, y) = m.geometry.pixel_center(r, c);
                    if let Some((tr, tc)) = t.geometry.pixel_of(x, y) {
                        let v = t.get(0, tr, tc);
                        best = Some(best.map_or(v, |bv: f32| bv.max(v)));
                    }
                }
                assert_eq!(m.get(0, r, c), best.unwrap());
            }
        }
        assert_eq!(m.get(0, 0, 1), 7.0);
        let f = mosaic(&[a, b], MosaicReducer::First).unwrap();
        assert_eq!(f.get(0, 0, 1), 3.0);
    }

    #[test]
    fn mosaic_errors() {
        assert!(matches!(
            mosaic(&[], MosaicReducer::Max),
            Err(CanopyError::Degenerate(_))
        ));
        let a = Raster::filled(grid(0.0, 2.0, 1.0, 2, 2), 1, 3.0, NODATA);
        let b = Raster::filled(grid(0.5, 2.0, 1.0, 2, 2), 1, 7.0, NODATA);
        assert!(mosaic(&[a.clone(), b], MosaicReducer::Max).is_err());
        let c = Raster::filled(grid(0.0, 2.0, 2.0, 1, 1), 1, 7.0, NODATA);
        assert!(mosaic(&[a, c], MosaicReducer::Max).is_err());
    }

    #[test]
    fn stack_band_counts() {
        let g = grid(0.0, 2.0, 1.0, 2, 2);
        let naip = Raster::filled(g.clone(), 4, 0.1, NODATA);
        let s10 = Raster::filled(g.clone(), 4, 0.2, NODATA);
        let s20 = Raster::filled(g.clone(), 6, 0.3, NODATA);
        let ms = stack(&[&naip, &s10, &s20], &MS_ROLES).unwrap();
        assert_eq!(ms.bands(), 14);
        assert_eq!(ms.role_index("s2_20m_1"), Some(8));
        assert_eq!(ms.raster.get(8, 0, 0), 0.3);

        let rgb = Raster::filled(g.clone(), 3, 0.1, NODATA);
        assert_eq!(stack(&[&rgb], &RGB_ROLES).unwrap().bands(), 3);

        let one = Raster::filled(g.clone(), 1, 0.1, NODATA);
        assert_eq!(stack(&[&one], &["ndvi"]).unwrap().bands(), 1);

        let other = Raster::filled(grid(1.0, 2.0, 1.0, 2, 2), 1, 0.1, NODATA);
        assert!(stack(&[&one, &other], &["a", "b"]).is_err());
        assert!(stack(&[&one], &["a", "b"]).is_err());
    }
}
