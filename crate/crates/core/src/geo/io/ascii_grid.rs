//! ESRI ASCII Grid (`.asc`) for single-band rasters.
//!
//! The CRS tag travels in a `.prj` sidecar holding the tag verbatim; without
//! one the grid reads back as `"unknown"`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CanopyError, Result};
use crate::geo::{GridGeometry, Raster};

pub fn write_ascii_grid(path: &Path, raster: &Raster) -> Result<()> {
    raster.require_single_band("ASCII grid raster")?;
    let g = &raster.geometry;
    let mut out = String::with_capacity(g.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", g.width);
    let _ = writeln!(out, "nrows {}", g.height);
    let _ = writeln!(out, "xllcorner {}", g.min_x());
    let _ = writeln!(out, "yllcorner {}", g.min_y());
    let _ = writeln!(out, "cellsize {}", g.pixel_size);
    let _ = writeln!(out, "NODATA_value {}", raster.nodata);
    for row in raster.data().chunks_exact(g.width) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CanopyError::io(path, e))?;
    let prj = path.with_extension("prj");
    std::fs::write(&prj, &g.crs_tag).map_err(|e| CanopyError::io(prj, e))
}

pub fn read_ascii_grid(path: &Path) -> Result<Raster> {
    let text = std::fs::read_to_string(path).map_err(|e| CanopyError::io(path, e))?;
    let mut tokens = text.split_ascii_whitespace().peekable();
    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut centred = false;
    let mut cellsize = None;
    let mut nodata = crate::geo::NODATA;
    while let Some(key) = tokens.peek() {
        if key.parse::<f64>().is_ok() {
            break;
        }
        let key = tokens.next().unwrap_or_default().to_ascii_lowercase();
        let value = tokens
            .next()
            .ok_or_else(|| CanopyError::format(path, format!("header key {key} has no value")))?;
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| CanopyError::format(path, format!("bad value '{v}' for {key}")))
        };
        match key.as_str() {
            "ncols" => ncols = Some(num(value)? as usize),
            "nrows" => nrows = Some(num(value)? as usize),
            "xllcorner" => xll = Some(num(value)?),
            "yllcorner" => yll = Some(num(value)?),
            "xllcenter" => {
                xll = Some(num(value)?);
                centred = true;
            }
            "yllcenter" => {
                yll = Some(num(value)?);
                centred = true;
            }
            "cellsize" => cellsize = Some(num(value)?),
            "nodata_value" => nodata = num(value)? as f32,
            other => {
                return Err(CanopyError::format(path, format!("unknown header key {other}")))
            }
        }
    }
    let missing = |k: &str| CanopyError::format(path, format!("missing header key {k}"));
    let (ncols, nrows) = (ncols.ok_or_else(|| missing("ncols"))?, nrows.ok_or_else(|| missing("nrows"))?);
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    let (mut xll, mut yll) = (xll.ok_or_else(|| missing("xllcorner"))?, yll.ok_or_else(|| missing("yllcorner"))?);
    if centred {
        xll -= 0.5 * cellsize;
        yll -= 0.5 * cellsize;
    }
    let crs = std::fs::read_to_string(path.with_extension("prj"))
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|_| "unknown".to_string());
    let geometry = GridGeometry::new(xll, yll + nrows as f64 * cellsize, cellsize, ncols, nrows, crs)?;
    let data = tokens
        .map(|t| {
            t.parse::<f32>()
                .map_err(|_| CanopyError::format(path, format!("bad cell value '{t}'")))
        })
        .collect::<Result<Vec<f32>>>()?;
    if data.len() != geometry.len() {
        return Err(CanopyError::format(
            path,
            format!("{} cells for a {ncols}x{nrows} grid", data.len()),
        ));
    }
    Raster::from_data(geometry, 1, data, nodata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::NODATA;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chm.asc");
        let g = GridGeometry::new(1000.0, 2005.0, 0.5, 4, 3, "EPSG:3435").unwrap();
        let data = vec![
            0.1, 1.0 / 3.0, NODATA, 7.25, -0.0, 1e-7, 3.4e38, 12.0, 5.5, 6.5, 0.3, 0.7,
        ];
        let r = Raster::from_data(g, 1, data, NODATA).unwrap();
        write_ascii_grid(&path, &r).unwrap();
        let back = read_ascii_grid(&path).unwrap();
        assert!(back.geometry.same_grid(&r.geometry));
        assert!(back
            .data()
            .iter()
            .zip(r.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let first = std::fs::read(&path).unwrap();
        write_ascii_grid(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn cell_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.asc");
        std::fs::write(
            &path,
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n",
        )
        .unwrap();
        assert!(matches!(read_ascii_grid(&path), Err(CanopyError::Format { .. })));
    }

    #[test]
    fn centre_registration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.asc");
        std::fs::write(
            &path,
            "ncols 1\nnrows 1\nxllcenter 0.5\nyllcenter 0.5\ncellsize 1\n4\n",
        )
        .unwrap();
        let r = read_ascii_grid(&path).unwrap();
        assert_eq!((r.geometry.origin_x, r.geometry.origin_y), (0.0, 1.0));
        assert_eq!(r.data(), &[4.0]);
    }
}
