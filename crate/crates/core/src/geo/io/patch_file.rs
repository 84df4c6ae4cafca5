//! Patch container.
//!
//! ```text
//! magic        5 bytes  "CNPY1"
//! sample_count u32 LE
//! height       u32 LE
//! width        u32 LE
//! in_bands     u32 LE
//! per sample:  inputs   in_bands*H*W f32 LE (band-major)
//!              tree     H*W f32 LE
//!              height   H*W f32 LE
//!              aux      H*W f32 LE
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{CanopyError, Result};
use crate::geo::PatchSample;

pub const PATCH_MAGIC: &[u8; 5] = b"CNPY1";

pub fn write_patches(path: &Path, samples: &[PatchSample]) -> Result<()> {
    let (h, w, bands) = match samples.first() {
        Some(s) => (s.height, s.width, s.in_bands),
        None => (0, 0, 0),
    };
    for s in samples {
        s.validate()?;
        if (s.height, s.width, s.in_bands) != (h, w, bands) {
            return Err(CanopyError::Shape(
                "all samples in a container must share height, width and band count".into(),
            ));
        }
    }
    let file = File::create(path).map_err(|e| CanopyError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| CanopyError::io(path, e);
    out.write_all(PATCH_MAGIC).map_err(io)?;
    for v in [samples.len(), h, w, bands] {
        let v = u32::try_from(v)
            .map_err(|_| CanopyError::Shape(format!("{v} does not fit the u32 header")))?;
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for s in samples {
        for layer in [&s.inputs, &s.tree_mask, &s.pixel_height, &s.aux_mask] {
            write_f32s(&mut out, layer).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

fn write_f32s(out: &mut impl Write, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_f32s(input: &mut impl Read, n: usize) -> std::io::Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    input.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Header fields: (sample_count, height, width, in_bands).
pub fn read_patch_header(path: &Path) -> Result<(usize, usize, usize, usize)> {
    let file = File::open(path).map_err(|e| CanopyError::io(path, e))?;
    read_header(path, &mut BufReader::new(file))
}

fn read_header(path: &Path, input: &mut impl Read) -> Result<(usize, usize, usize, usize)> {
    let mut magic = [0u8; 5];
    input
        .read_exact(&mut magic)
        .map_err(|_| CanopyError::format(path, "file too short for patch header"))?;
    if &magic != PATCH_MAGIC {
        return Err(CanopyError::format(path, "bad magic, expected CNPY1"));
    }
    let mut fields = [0usize; 4];
    for f in &mut fields {
        let mut b = [0u8; 4];
        input
            .read_exact(&mut b)
            .map_err(|_| CanopyError::format(path, "truncated patch header"))?;
        *f = u32::from_le_bytes(b) as usize;
    }
    Ok((fields[0], fields[1], fields[2], fields[3]))
}

pub fn read_patches(path: &Path) -> Result<Vec<PatchSample>> {
    let file = File::open(path).map_err(|e| CanopyError::io(path, e))?;
    let expected_len = file.metadata().map_err(|e| CanopyError::io(path, e))?.len();
    let mut input = BufReader::new(file);
    let (count, h, w, bands) = read_header(path, &mut input)?;
    let n = h * w;
    let per_sample = (n * (bands + 3) * 4) as u64;
    if 21 + per_sample * count as u64 != expected_len {
        return Err(CanopyError::format(
            path,
            format!("header announces {count} samples of {bands}x{h}x{w} but file length is {expected_len}"),
        ));
    }
    let trunc = |_| CanopyError::format(path, "truncated patch data");
    (0..count)
        .map(|_| {
            Ok(PatchSample {
                in_bands: bands,
                height: h,
                width: w,
                inputs: read_f32s(&mut input, n * bands).map_err(trunc)?,
                tree_mask: read_f32s(&mut input, n).map_err(trunc)?,
                pixel_height: read_f32s(&mut input, n).map_err(trunc)?,
                aux_mask: read_f32s(&mut input, n).map_err(trunc)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: f32) -> PatchSample {
        let n = 6;
        PatchSample {
            in_bands: 2,
            height: 2,
            width: 3,
            inputs: (0..2 * n).map(|i| seed + i as f32 / 7.0).collect(),
            tree_mask: vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            pixel_height: (0..n).map(|i| i as f32 * 0.1 + seed).collect(),
            aux_mask: vec![1.0; n],
        }
    }

    #[test]
    fn round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let samples = vec![sample(0.5), sample(-1.25), sample(3.0)];
        write_patches(&path, &samples).unwrap();
        assert_eq!(read_patch_header(&path).unwrap(), (3, 2, 3, 2));
        assert_eq!(read_patches(&path).unwrap(), samples);
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            21 + 3 * (6 * 5 * 4) as u64
        );
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_patches(&path, &[sample(0.0)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 1);
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_patches(&path).is_err());
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_patches(&path).is_err());
    }

    #[test]
    fn empty_container() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_patches(&path, &[]).unwrap();
        assert!(read_patches(&path).unwrap().is_empty());
    }
}
