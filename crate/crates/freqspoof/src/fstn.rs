//! FSTN binary tensors.
//!
//! Layout: `b"FSTN"`, version byte `1`, dtype byte `0` (f32), rank byte, a
//! reserved zero byte, `rank` little-endian `u32` extents, then the row-major
//! little-endian `f32` payload.

use std::fs;
use std::path::Path;

use freqspoof_core::Tensor;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FSTN";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;
const HEADER: usize = 8;

pub fn encode(t: &Tensor<f32>) -> Result<Vec<u8>> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| Error::Data(format!("rank {} does not fit FSTN", t.rank())))?;
    let mut out = Vec::with_capacity(HEADER + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, DTYPE_F32, rank, 0]);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::Data(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor<f32>> {
    let bad = |m: String| Error::Data(format!("invalid FSTN data: {m}"));
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(bad("missing FSTN magic".into()));
    }
    let (version, dtype, rank, reserved) = (bytes[4], bytes[5], bytes[6] as usize, bytes[7]);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    if dtype != DTYPE_F32 {
        return Err(bad(format!("unsupported dtype {dtype}")));
    }
    if reserved != 0 {
        return Err(bad(format!("reserved byte is {reserved}")));
    }
    let dims_end = HEADER + 4 * rank;
    if bytes.len() < dims_end {
        return Err(bad(format!("truncated header for rank {rank}")));
    }
    let dims: Vec<usize> = bytes[HEADER..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad(format!("extents {dims:?} overflow")))?;
    let payload = &bytes[dims_end..];
    if payload.len() != 4 * count {
        return Err(bad(format!(
            "extents {dims:?} need {} payload bytes, found {}",
            4 * count,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::new(&dims, data)?)
}

pub fn save(path: &Path, t: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode(t)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2, 1], vec![1.0f32, -2.5]).unwrap();
        let b = encode(&t).unwrap();
        assert_eq!(&b[..8], b"FSTN\x01\x00\x02\x00");
        assert_eq!(&b[8..16], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 24);
        assert_eq!(decode(&b).unwrap(), t);
    }

    #[test]
    fn rejects_corruption() {
        let b = encode(&Tensor::new(&[3], vec![1.0f32, 2.0, 3.0]).unwrap()).unwrap();
        assert!(decode(&b[..b.len() - 1]).is_err());
        let mut v = b.clone();
        v[4] = 2;
        assert!(decode(&v).is_err());
        let mut v = b.clone();
        v[5] = 1;
        assert!(decode(&v).is_err());
        let mut v = b;
        v[0] = b'X';
        assert!(decode(&v).is_err());
    }
}
