//! Binary parameter checkpoints.
//!
//! Layout (little endian): magic `TSGW`, `u32` version, `u32` parameter
//! count, then per parameter `u16` name length, UTF-8 name, `u8` rank, `u32`
//! per dimension and the `f64` payload.

use std::io::{Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::ByteReader;

pub const MAGIC: &[u8; 4] = b"TSGW";
pub const VERSION: u32 = 1;

pub fn encode(store: &ParamStore) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Config(format!("parameter name too long: {}", p.name)))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(p.value.rank() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?
            .to_owned();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let at = r.offset();
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(Error::format(at, "zero dimension"));
            }
            shape.push(d);
        }
        let at = r.offset();
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| Error::format(at, "dimension product overflows"))?;
        let data = r.f64s(n)?;
        let value = Tensor::new(shape, data)
            .map_err(|e| Error::format(at, format!("bad payload for {name}: {e}")))?;
        store
            .add(name, value)
            .map_err(|e| Error::format(at, e.to_string()))?;
    }
    if r.remaining() != 0 {
        return Err(Error::format(
            r.offset(),
            "trailing bytes after last parameter",
        ));
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let bytes = encode(store)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
