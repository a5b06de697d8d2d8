//! Binary weight files.
//!
//! Layout, all little-endian: the 8-byte magic `AINPCKPT`, a `u32` format
//! version, a `u32` layer count, then for each layer a `u32` tensor count and
//! for each tensor a `u32` rank, `rank` dimensions as `u64` and the values as
//! `f64`.

use std::fs;
use std::path::Path;

use super::layers::LayerParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AINPCKPT";
pub const VERSION: u32 = 1;

pub fn encode_params(params: &[LayerParams]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for layer in params {
        out.extend_from_slice(&(layer.tensors.len() as u32).to_le_bytes());
        for t in &layer.tensors {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<LayerParams>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Data("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let layers = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..layers {
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
            let numel = numel.ok_or_else(|| Error::Data("checkpoint tensor too large".into()))?;
            let raw = r.take(numel.checked_mul(8).ok_or_else(|| Error::Data("checkpoint tensor too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        out.push(LayerParams { tensors });
    }
    if r.pos != bytes.len() {
        return Err(Error::Data(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn save_params(path: &Path, params: &[LayerParams]) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

/// Create the directory `path` will be written into, if any.
pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn load_params(path: &Path) -> Result<Vec<LayerParams>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_params(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<LayerParams> {
        vec![
            LayerParams {
                tensors: vec![
                    Tensor::new(vec![2, 1, 3], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 1.0 / 3.0]).unwrap(),
                    Tensor::zeros(&[2]),
                ],
            },
            LayerParams { tensors: vec![] },
        ]
    }

    #[test]
    fn bit_exact_round_trip() {
        let params = sample();
        let back = decode_params(&encode_params(&params)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in params.iter().zip(&back) {
            for (x, y) in a.tensors.iter().zip(&b.tensors) {
                assert_eq!(x.shape(), y.shape());
                let xb: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u64> = y.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(xb, yb);
            }
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_params(&sample());
        assert_eq!(&bytes[..8], b"AINPCKPT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 4 + (4 + 24 + 48) + (4 + 8 + 16) + 4);
    }

    #[test]
    fn corrupt_inputs_are_data_errors() {
        let bytes = encode_params(&sample());
        assert!(matches!(decode_params(&bytes[..bytes.len() - 1]), Err(Error::Data(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_params(&bad), Err(Error::Data(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(decode_params(&extra), Err(Error::Data(_))));
    }
}
