//! Point cloud readers: LAS 1.2–1.4 (uncompressed, x/y/z only) and an
//! `x,y,z` CSV fallback.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CanopyError, Result};
use crate::lidar::{Point, PointCloud};

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

fn le_f64(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn read_las(path: &Path) -> Result<PointCloud> {
    let mut file = File::open(path).map_err(|e| CanopyError::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| CanopyError::io(path, e))?;
    parse_las(path, &bytes)
}

fn parse_las(path: &Path, b: &[u8]) -> Result<PointCloud> {
    let fail = |m: String| CanopyError::format(path, m);
    if b.len() < 227 || &b[0..4] != b"LASF" {
        return Err(fail("not a LAS file (missing LASF signature)".into()));
    }
    let (major, minor) = (b[24], b[25]);
    if major != 1 || !(2..=4).contains(&minor) {
        return Err(fail(format!("unsupported LAS version {major}.{minor}")));
    }
    let header_size = le_u16(b, 94) as usize;
    let offset = le_u32(b, 96) as usize;
    let format_byte = b[104];
    if format_byte & 0xC0 != 0 {
        return Err(fail("compressed (LAZ) point records are not supported".into()));
    }
    let format = format_byte & 0x3F;
    if format > 10 {
        return Err(fail(format!("unknown point format {format}")));
    }
    let record_len = le_u16(b, 105) as usize;
    if record_len < 12 {
        return Err(fail(format!("point record length {record_len} too short")));
    }
    let mut count = le_u32(b, 107) as u64;
    if minor >= 4 && header_size >= 375 && b.len() >= 255 {
        let extended = le_u64(b, 247);
        if extended > 0 {
            count = extended;
        }
    }
    let scale = [le_f64(b, 131), le_f64(b, 139), le_f64(b, 147)];
    let offs = [le_f64(b, 155), le_f64(b, 163), le_f64(b, 171)];
    let count = usize::try_from(count).map_err(|_| fail("point count overflows".into()))?;
    let end = offset + count * record_len;
    if end > b.len() {
        return Err(fail(format!(
            "{count} records of {record_len} bytes exceed the file length"
        )));
    }
    let points = b[offset..end]
        .chunks_exact(record_len)
        .map(|rec| Point {
            x: le_i32(rec, 0) as f64 * scale[0] + offs[0],
            y: le_i32(rec, 4) as f64 * scale[1] + offs[1],
            z: le_i32(rec, 8) as f64 * scale[2] + offs[2],
        })
        .collect();
    PointCloud::new(points)
}

/// Write a LAS 1.2 point format 0 file with the given coordinate scale.
pub fn write_las(path: &Path, cloud: &PointCloud, scale: f64) -> Result<()> {
    let n = cloud.len();
    let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
    for p in &cloud.points {
        for (k, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    if n == 0 {
        lo = [0.0; 3];
        hi = [0.0; 3];
    }
    let offs = lo.map(f64::floor);
    let mut h = vec![0u8; 227];
    h[0..4].copy_from_slice(b"LASF");
    h[24] = 1;
    h[25] = 2;
    let software = b"canopy";
    h[58..58 + software.len()].copy_from_slice(software);
    h[94..96].copy_from_slice(&227u16.to_le_bytes());
    h[96..100].copy_from_slice(&227u32.to_le_bytes());
    h[104] = 0;
    h[105..107].copy_from_slice(&20u16.to_le_bytes());
    let n32 = u32::try_from(n)
        .map_err(|_| CanopyError::Shape(format!("{n} points exceed LAS 1.2 limits")))?;
    h[107..111].copy_from_slice(&n32.to_le_bytes());
    h[111..115].copy_from_slice(&n32.to_le_bytes());
    for k in 0..3 {
        h[131 + 8 * k..139 + 8 * k].copy_from_slice(&scale.to_le_bytes());
        h[155 + 8 * k..163 + 8 * k].copy_from_slice(&offs[k].to_le_bytes());
        h[179 + 16 * k..187 + 16 * k].copy_from_slice(&hi[k].to_le_bytes());
        h[187 + 16 * k..195 + 16 * k].copy_from_slice(&lo[k].to_le_bytes());
    }
    let file = File::create(path).map_err(|e| CanopyError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CanopyError::io(path, e);
    out.write_all(&h).map_err(io)?;
    let mut rec = [0u8; 20];
    for p in &cloud.points {
        for (k, v) in [p.x, p.y, p.z].into_iter().enumerate() {
            let q = ((v - offs[k]) / scale).round();
            if q.abs() > i32::MAX as f64 {
                return Err(CanopyError::Shape(format!(
                    "coordinate {v} does not fit LAS scale {scale}"
                )));
            }
            rec[4 * k..4 * k + 4].copy_from_slice(&(q as i32).to_le_bytes());
        }
        out.write_all(&rec).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_xyz_csv(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).map_err(|e| CanopyError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| CanopyError::io(path, e))?
        .unwrap_or_default();
    let cols: Vec<String> = header
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    if cols.len() < 3 || cols[0] != "x" || cols[1] != "y" || cols[2] != "z" {
        return Err(CanopyError::format(
            path,
            format!("expected an 'x,y,z' header, found '{header}'"),
        ));
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| CanopyError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',').map(|s| s.trim().parse::<f64>());
        let mut next = || -> Result<f64> {
            f.next()
                .and_then(|v| v.ok())
                .ok_or_else(|| CanopyError::format(path, format!("bad row {}: '{line}'", i + 2)))
        };
        points.push(Point {
            x: next()?,
            y: next()?,
            z: next()?,
        });
    }
    PointCloud::new(points)
}

pub fn write_xyz_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = File::create(path).map_err(|e| CanopyError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CanopyError::io(path, e);
    writeln!(out, "x,y,z").map_err(io)?;
    for p in &cloud.points {
        writeln!(out, "{},{},{}", p.x, p.y, p.z).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Read by extension: `.las` or `.csv`/`.xyz`.
pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("las") => read_las(path),
        Some("csv") | Some("xyz") => read_xyz_csv(path),
        _ => Err(CanopyError::Config(format!(
            "unknown point cloud extension for {}",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> PointCloud {
        PointCloud::new(vec![
            Point { x: 443_100.125, y: 4_640_010.5, z: 35.25 },
            Point { x: 443_180.0, y: 4_640_099.875, z: 6.0 },
            Point { x: 443_150.333, y: 4_640_050.001, z: 79.999 },
        ])
        .unwrap()
    }

    #[test]
    fn las_round_trip_within_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.las");
        write_las(&path, &cloud(), 0.001).unwrap();
        let back = read_las(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in back.points.iter().zip(&cloud().points) {
            assert!((a.x - b.x).abs() <= 0.0005 + 1e-9);
            assert!((a.y - b.y).abs() <= 0.0005 + 1e-9);
            assert!((a.z - b.z).abs() <= 0.0005 + 1e-9);
        }
    }

    #[test]
    fn las_1_4_extended_count_and_longer_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c14.las");
        let mut h = vec![0u8; 375];
        h[0..4].copy_from_slice(b"LASF");
        h[24] = 1;
        h[25] = 4;
        h[94..96].copy_from_slice(&375u16.to_le_bytes());
        h[96..100].copy_from_slice(&375u32.to_le_bytes());
        h[104] = 6;
        h[105..107].copy_from_slice(&30u16.to_le_bytes());
        for k in 0..3 {
            h[131 + 8 * k..139 + 8 * k].copy_from_slice(&0.01f64.to_le_bytes());
        }
        h[155..163].copy_from_slice(&1000.0f64.to_le_bytes());
        h[247..255].copy_from_slice(&2u64.to_le_bytes());
        for (x, y, z) in [(10i32, 20i32, 3000i32), (-5, 7, 650)] {
            let mut rec = [0u8; 30];
            rec[0..4].copy_from_slice(&x.to_le_bytes());
            rec[4..8].copy_from_slice(&y.to_le_bytes());
            rec[8..12].copy_from_slice(&z.to_le_bytes());
            h.extend_from_slice(&rec);
        }
        std::fs::write(&path, &h).unwrap();
        let c = read_las(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c.points[0].x - 1000.1).abs() < 1e-9);
        assert!((c.points[1].z - 6.5).abs() < 1e-9);
    }

    #[test]
    fn las_rejects_garbage_and_laz() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.las");
        std::fs::write(&path, b"nope").unwrap();
        assert!(read_las(&path).is_err());
        write_las(&path, &cloud(), 0.01).unwrap();
        let mut b = std::fs::read(&path).unwrap();
        b[104] |= 0x80;
        std::fs::write(&path, &b).unwrap();
        assert!(read_las(&path).is_err());
    }

    #[test]
    fn csv_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_xyz_csv(&path, &cloud()).unwrap();
        assert_eq!(read_point_cloud(&path).unwrap(), cloud());
    }

    #[test]
    fn csv_requires_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "1,2,3\n").unwrap();
        assert!(read_xyz_csv(&path).is_err());
        std::fs::write(&path, "x,y,z\n1,2\n").unwrap();
        assert!(read_xyz_csv(&path).is_err());
    }
}
