//! Model file: `CNPM1`, u16 version, u32-length JSON config, then every
//! parameter tensor in declaration order as f32 little-endian.

use std::fs;
use std::path::Path;

use crate::error::{CanopyError, Result};
use crate::nn::{Scalar, Tensor, UNetConfig, UNetModel};

pub const MODEL_MAGIC: &[u8; 5] = b"CNPM1";
pub const MODEL_VERSION: u16 = 1;

pub fn encode_model<T: Scalar>(model: &UNetModel<T>) -> Result<Vec<u8>> {
    let config = serde_json::to_vec(model.config())
        .map_err(|e| CanopyError::Config(format!("cannot serialise model config: {e}")))?;
    let mut out = Vec::with_capacity(11 + config.len() + 4 * model.parameter_count());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    for p in model.params() {
        for &v in p.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_model(path: &Path, bytes: &[u8]) -> Result<UNetModel<f32>> {
    let fail = |m: String| CanopyError::format(path, m);
    if bytes.len() < 11 || &bytes[..5] != MODEL_MAGIC {
        return Err(fail("not a model file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[5], bytes[6]]);
    if version != MODEL_VERSION {
        return Err(fail(format!("unsupported model version {version}")));
    }
    let len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let body = bytes
        .get(11..11 + len)
        .ok_or_else(|| fail("truncated config block".into()))?;
    let config: UNetConfig =
        serde_json::from_slice(body).map_err(|e| fail(format!("bad config block: {e}")))?;
    config.validate()?;
    let shapes: Vec<Vec<usize>> = UNetModel::<f32>::init(config.clone(), 0)?
        .params()
        .iter()
        .map(|p| p.shape().to_vec())
        .collect();
    let mut values = bytes[11 + len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if bytes.len() - 11 - len != 4 * expected {
        return Err(fail(format!(
            "expected {expected} parameters, file holds {} bytes of them",
            bytes.len() - 11 - len
        )));
    }
    let params = shapes
        .iter()
        .map(|s| Tensor::from_vec(s, values.by_ref().take(s.iter().product()).collect()))
        .collect::<Result<Vec<_>>>()?;
    UNetModel::from_params(config, params)
}

pub fn save_model<T: Scalar>(path: &Path, model: &UNetModel<T>) -> Result<()> {
    fs::write(path, encode_model(model)?).map_err(|e| CanopyError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<UNetModel<f32>> {
    let bytes = fs::read(path).map_err(|e| CanopyError::io(path, e))?;
    decode_model(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Task, Variant};

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cnpm");
        let cfg = UNetConfig::new(Variant::PartiallyShared, 14, 2, 4);
        let model = UNetModel::<f32>::init(cfg.clone(), 3).unwrap();
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.config(), &cfg);
        assert_eq!(back.params(), model.params());
        let x = Tensor::from_vec(&[1, 14, 8, 8], (0..896).map(|i| (i % 7) as f32 * 0.1).collect())
            .unwrap();
        assert_eq!(back.forward(&x).unwrap(), model.forward(&x).unwrap());
    }

    #[test]
    fn rejects_bad_magic_version_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cnpm");
        let model =
            UNetModel::<f32>::init(UNetConfig::new(Variant::SingleTask(Task::AuxMask), 3, 1, 2), 0)
                .unwrap();
        let good = encode_model(&model).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_model(&path, &bad).is_err());
        let mut bad = good.clone();
        bad[5] = 9;
        assert!(decode_model(&path, &bad).is_err());
        assert!(decode_model(&path, &good[..good.len() - 4]).is_err());
        assert!(decode_model(&path, &good).is_ok());
    }
}
