//! Uncompressed GeoTIFF writer and a GeoTIFF reader for north-up grids.
//!
//! Files are written pixel-interleaved in a single strip, with
//! `ModelPixelScale`, `ModelTiepoint`, a GeoKey directory carrying the grid's
//! CRS tag as citation, and `GDAL_NODATA`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{ifd::Value, Decoder, DecodingResult, Limits};
use tiff::encoder::TiffEncoder;
use tiff::tags::{
    CompressionMethod, PhotometricInterpretation, PlanarConfiguration, SampleFormat, Tag,
};

use crate::error::{CanopyError, Result};
use crate::geo::{GridGeometry, Raster};

/// Storage type of a written raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleType {
    Float32,
    /// Byte masks: values are rounded and clamped into 0..=255.
    UInt8,
}

const GT_MODEL_TYPE: u16 = 1024;
const GT_RASTER_TYPE: u16 = 1025;
const GT_CITATION: u16 = 1026;
const PROJECTED_CS_TYPE: u16 = 3072;
const RASTER_PIXEL_IS_POINT: u16 = 2;

fn tag(code: u16) -> Tag {
    Tag::from_u16_exhaustive(code)
}

fn tiff_err(path: &Path, e: tiff::TiffError) -> CanopyError {
    match e {
        tiff::TiffError::IoError(io) => CanopyError::io(path, io),
        other => CanopyError::format(path, other.to_string()),
    }
}

pub fn write_geotiff(path: &Path, raster: &Raster, sample: SampleType) -> Result<()> {
    let file = File::create(path).map_err(|e| CanopyError::io(path, e))?;
    write_inner(BufWriter::new(file), raster, sample).map_err(|e| tiff_err(path, e))
}

fn write_inner(
    writer: BufWriter<File>,
    raster: &Raster,
    sample: SampleType,
) -> std::result::Result<(), tiff::TiffError> {
    let g = &raster.geometry;
    let bands = raster.bands();
    let n = g.len();
    let mut enc = TiffEncoder::new(writer)?;
    let mut dir = enc.image_directory()?;

    let (offset, byte_count, bits, format) = match sample {
        SampleType::Float32 => {
            let mut buf = Vec::with_capacity(n * bands);
            for i in 0..n {
                for b in 0..bands {
                    buf.push(raster.data()[b * n + i]);
                }
            }
            let off = dir.write_data(buf.as_slice())?;
            (off, (buf.len() * 4) as u64, 32u16, SampleFormat::IEEEFP)
        }
        SampleType::UInt8 => {
            let mut buf = Vec::with_capacity(n * bands);
            for i in 0..n {
                for b in 0..bands {
                    let v = raster.data()[b * n + i];
                    buf.push(if v.is_nan() { 255 } else { v.round().clamp(0.0, 255.0) as u8 });
                }
            }
            let off = dir.write_data(buf.as_slice())?;
            (off, buf.len() as u64, 8u16, SampleFormat::Uint)
        }
    };

    dir.write_tag(Tag::ImageWidth, g.width as u32)?;
    dir.write_tag(Tag::ImageLength, g.height as u32)?;
    dir.write_tag(Tag::BitsPerSample, vec![bits; bands].as_slice())?;
    dir.write_tag(Tag::Compression, CompressionMethod::None)?;
    dir.write_tag(Tag::PhotometricInterpretation, PhotometricInterpretation::BlackIsZero)?;
    dir.write_tag(Tag::StripOffsets, offset as u32)?;
    dir.write_tag(Tag::SamplesPerPixel, bands as u16)?;
    dir.write_tag(Tag::RowsPerStrip, g.height as u32)?;
    dir.write_tag(Tag::StripByteCounts, byte_count as u32)?;
    dir.write_tag(Tag::PlanarConfiguration, PlanarConfiguration::Chunky)?;
    dir.write_tag(Tag::SampleFormat, vec![format; bands].as_slice())?;

    dir.write_tag(tag(33550), [g.pixel_size, g.pixel_size, 0.0].as_slice())?;
    dir.write_tag(
        tag(33922),
        [0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0].as_slice(),
    )?;
    let citation = format!("{}|", g.crs_tag);
    let mut keys: Vec<u16> = vec![1, 1, 0, 0];
    keys.extend([GT_MODEL_TYPE, 0, 1, 1]);
    keys.extend([GT_RASTER_TYPE, 0, 1, 1]);
    keys.extend([GT_CITATION, 34737, citation.len() as u16, 0]);
    if let Some(code) = epsg_code(&g.crs_tag) {
        keys.extend([PROJECTED_CS_TYPE, 0, 1, code]);
    }
    keys[3] = ((keys.len() - 4) / 4) as u16;
    dir.write_tag(tag(34735), keys.as_slice())?;
    dir.write_tag(tag(34737), citation.as_str())?;
    dir.write_tag(tag(42113), format!("{}", raster.nodata).as_str())?;
    dir.finish()
}

fn epsg_code(crs: &str) -> Option<u16> {
    crs.strip_prefix("EPSG:")?.parse().ok()
}

pub fn read_geotiff(path: &Path) -> Result<Raster> {
    let file = File::open(path).map_err(|e| CanopyError::io(path, e))?;
    read_inner(path, BufReader::new(file))
}

fn read_inner(path: &Path, reader: BufReader<File>) -> Result<Raster> {
    let err = |e| tiff_err(path, e);
    let mut dec = Decoder::new(reader)
        .map_err(err)?
        .with_limits(Limits::unlimited());
    let (width, height) = dec.dimensions().map_err(err)?;
    let bands = dec
        .find_tag_unsigned::<u16>(Tag::SamplesPerPixel)
        .map_err(err)?
        .unwrap_or(1) as usize;
    if let Some(p) = dec
        .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
        .map_err(err)?
    {
        if p != 1 {
            return Err(CanopyError::format(path, "planar (band-sequential) layout unsupported"));
        }
    }
    if dec.find_tag(tag(34264)).map_err(err)?.is_some() {
        return Err(CanopyError::format(
            path,
            "ModelTransformation grids (rotation terms) are unsupported",
        ));
    }
    let scale = f64_list(
        path,
        dec.find_tag(tag(33550))
            .map_err(err)?
            .ok_or_else(|| CanopyError::format(path, "missing ModelPixelScale"))?,
    )?;
    let tie = f64_list(
        path,
        dec.find_tag(tag(33922))
            .map_err(err)?
            .ok_or_else(|| CanopyError::format(path, "missing ModelTiepoint"))?,
    )?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(CanopyError::format(path, "short georeferencing tags"));
    }
    if (scale[0] - scale[1]).abs() > 1e-9 * scale[0].abs() {
        return Err(CanopyError::format(
            path,
            format!("non-square pixels {} x {}", scale[0], scale[1]),
        ));
    }
    let ps = scale[0];
    let mut origin_x = tie[3] - tie[0] * ps;
    let mut origin_y = tie[4] + tie[1] * ps;

    let keys = match dec.find_tag(tag(34735)).map_err(err)? {
        Some(v) => v
            .into_u16_vec()
            .map_err(err)?,
        None => Vec::new(),
    };
    let ascii = match dec.find_tag(tag(34737)).map_err(err)? {
        Some(v) => v.into_string().map_err(err)?,
        None => String::new(),
    };
    let mut crs_tag = None;
    let mut epsg = None;
    for k in keys.get(4..).unwrap_or(&[]).chunks_exact(4) {
        match k[0] {
            GT_RASTER_TYPE if k[1] == 0 && k[3] == RASTER_PIXEL_IS_POINT => {
                origin_x -= 0.5 * ps;
                origin_y += 0.5 * ps;
            }
            GT_CITATION if k[1] == 34737 => {
                let (start, len) = (k[3] as usize, k[2] as usize);
                if let Some(s) = ascii.get(start..start + len) {
                    crs_tag = Some(s.trim_end_matches(['|', '\0']).to_string());
                }
            }
            PROJECTED_CS_TYPE | 2048 if k[1] == 0 => epsg = Some(format!("EPSG:{}", k[3])),
            _ => {}
        }
    }
    let crs_tag = crs_tag.or(epsg).unwrap_or_else(|| "unknown".to_string());

    let nodata = match dec.find_tag(tag(42113)).map_err(err)? {
        Some(v) => {
            let s = v.into_string().map_err(err)?;
            s.trim_matches(char::from(0)).trim().parse::<f32>().map_err(|_| {
                CanopyError::format(path, format!("unparseable GDAL_NODATA '{s}'"))
            })?
        }
        None => crate::geo::NODATA,
    };

    let values: Vec<f32> = match dec.read_image().map_err(err)? {
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I32(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => return Err(CanopyError::format(path, "unsupported sample type")),
    };
    let geometry = GridGeometry::new(
        origin_x,
        origin_y,
        ps,
        width as usize,
        height as usize,
        crs_tag,
    )?;
    let n = geometry.len();
    if values.len() != n * bands {
        return Err(CanopyError::format(
            path,
            format!("decoded {} samples, expected {}", values.len(), n * bands),
        ));
    }
    let mut data = vec![0.0f32; n * bands];
    for (i, px) in values.chunks_exact(bands).enumerate() {
        for (b, &v) in px.iter().enumerate() {
            data[b * n + i] = v;
        }
    }
    Raster::from_data(geometry, bands, data, nodata)
}

fn f64_list(path: &Path, v: Value) -> Result<Vec<f64>> {
    match v {
        Value::List(items) => items
            .into_iter()
            .map(|x| match x {
                Value::Double(d) => Ok(d),
                Value::Float(f) => Ok(f as f64),
                other => Err(CanopyError::format(
                    path,
                    format!("expected doubles, found {other:?}"),
                )),
            })
            .collect(),
        Value::Double(d) => Ok(vec![d]),
        other => Err(CanopyError::format(
            path,
            format!("expected doubles, found {other:?}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{MASK_NODATA, NODATA};

    #[test]
    fn float_multiband_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.tif");
        let g = GridGeometry::new(443_210.5, 4_640_000.25, 1.0, 7, 5, "EPSG:26916").unwrap();
        let data: Vec<f32> = (0..g.len() * 14).map(|i| (i as f32).sin() * 3.7).collect();
        let mut r = Raster::from_data(g, 14, data, NODATA).unwrap();
        r.set(3, 2, 2, NODATA);
        write_geotiff(&path, &r, SampleType::Float32).unwrap();
        let back = read_geotiff(&path).unwrap();
        assert_eq!(back.geometry, r.geometry);
        assert_eq!(back.nodata, r.nodata);
        let same = back
            .data()
            .iter()
            .zip(r.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same);
    }

    #[test]
    fn byte_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.tif");
        let g = GridGeometry::new(0.0, 3.0, 0.5, 3, 3, "local").unwrap();
        let r = Raster::from_data(
            g,
            1,
            vec![0.0, 1.0, 1.0, 0.0, MASK_NODATA, 1.0, 0.0, 0.0, 1.0],
            MASK_NODATA,
        )
        .unwrap();
        write_geotiff(&path, &r, SampleType::UInt8).unwrap();
        assert_eq!(read_geotiff(&path).unwrap(), r);
    }

    #[test]
    fn garbage_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tif");
        std::fs::write(&path, b"not a tiff at all").unwrap();
        assert!(read_geotiff(&path).is_err());
    }
}
