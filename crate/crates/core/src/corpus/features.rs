//! Frame-feature container.
//!
//! Layout (little endian): magic `TSGF`, `u32` version, `u32` N, `u32` k,
//! `u32` d, then `N * k * d` values as `f64`.

use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::io::ByteReader;

pub const MAGIC: &[u8; 4] = b"TSGF";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 20;

/// Serialises an `[N, k, d]` tensor.
pub fn encode_features(features: &Tensor) -> Result<Vec<u8>> {
    let dims = match features.shape() {
        [n, k, d] => [*n, *k, *d],
        other => {
            return Err(Error::Dimension {
                op: "encode_features",
                left: vec![0, 0, 0],
                right: other.to_vec(),
            })
        }
    };
    let mut out = Vec::with_capacity(HEADER_LEN as usize + features.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in dims {
        let d =
            u32::try_from(d).map_err(|_| Error::Domain(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Tensor> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    if n == 0 || k == 0 || d == 0 {
        return Err(Error::format(
            8,
            format!("zero dimension in header {n}x{k}x{d}"),
        ));
    }
    let count = n
        .checked_mul(k)
        .and_then(|x| x.checked_mul(d))
        .filter(|c| c.checked_mul(8).is_some())
        .ok_or_else(|| Error::format(8, format!("header {n}x{k}x{d} overflows")))?;
    let payload = r.remaining() as u64;
    if payload != count as u64 * 8 {
        return Err(Error::format(
            HEADER_LEN,
            format!(
                "header declares {count} values ({} bytes) but payload has {payload} bytes",
                count * 8
            ),
        ));
    }
    let data = r.f64s(count)?;
    Tensor::new(vec![n, k, d], data).map_err(|e| Error::format(HEADER_LEN, e.to_string()))
}

pub fn save_features(path: &Path, features: &Tensor) -> Result<()> {
    std::fs::write(path, encode_features(features)?)?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<Tensor> {
    decode_features(&std::fs::read(path)?)
}

/// Concatenates per-shot `[k, d]` matrices into one `[N, k, d]` tensor.
pub fn stack_shots(shots: &[&Tensor]) -> Result<Tensor> {
    let first = shots
        .first()
        .ok_or_else(|| Error::Domain("no shots to stack".into()))?;
    let (k, d) = first
        .dims2()
        .ok_or_else(|| Error::Domain("shot features must be [k, d]".into()))?;
    let mut data = Vec::with_capacity(shots.len() * k * d);
    for s in shots {
        if s.shape() != [k, d] {
            return Err(Error::Dimension {
                op: "stack_shots",
                left: vec![k, d],
                right: s.shape().to_vec(),
            });
        }
        data.extend_from_slice(s.data());
    }
    Tensor::new(vec![shots.len(), k, d], data)
}

/// Splits an `[N, k, d]` tensor into per-shot `[k, d]` matrices.
pub fn split_shots(features: &Tensor) -> Result<Vec<Tensor>> {
    let [n, k, d] = match features.shape() {
        [n, k, d] => [*n, *k, *d],
        other => return Err(Error::Domain(format!("expected [N, k, d], got {other:?}"))),
    };
    let data = features.data();
    (0..n)
        .map(|i| Tensor::matrix(k, d, data[i * k * d..(i + 1) * k * d].to_vec()))
        .collect()
}
