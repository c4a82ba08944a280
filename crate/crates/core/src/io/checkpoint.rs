//! Network checkpoint container: the cube container's framing with magic
//! `HSPW` and a named-tensor directory.
//!
//! Layout, little-endian: magic `HSPW`, version `u32 = 1`, tensor count
//! `u32`, then per tensor: name length `u32`, UTF-8 name bytes, rank `u32`,
//! dimensions as `u32` each, then the payload as 32-bit floats.

use crate::autodiff::{NetworkParams, Tensor};
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"HSPW";
const VERSION: u32 = 1;
const MAX_ELEMENTS: u64 = 1 << 31;

pub fn save_params(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &dim in tensor.shape() {
            let v = u32::try_from(dim)
                .map_err(|_| Error::format(format!("dimension {dim} exceeds u32"), None))?;
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::format(
                format!("checkpoint truncated at byte {}", self.offset),
                Some(self.offset as u64),
            ));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, offset: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("bad magic at offset 0, expected \"HSPW\"", Some(0)));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}"), Some(4)));
    }
    let count = r.u32()?;
    let mut params = NetworkParams::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format("tensor name is not UTF-8", Some(r.offset as u64)))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut total: u64 = 1;
        for _ in 0..rank {
            let d = r.u32()? as u64;
            total = total
                .checked_mul(d)
                .filter(|&v| v <= MAX_ELEMENTS)
                .ok_or_else(|| Error::format("tensor dimensions overflow", Some(r.offset as u64)))?;
            shape.push(d as usize);
        }
        let mut data = Vec::with_capacity(total as usize);
        for _ in 0..total {
            let v = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(
                    format!("non-finite value in tensor '{name}'"),
                    Some(r.offset as u64),
                ));
            }
            data.push(v as f64);
        }
        if params.insert(name.clone(), Tensor::from_vec(shape, data)?).is_some() {
            return Err(Error::format(format!("duplicate tensor '{name}'"), None));
        }
    }
    if r.offset != bytes.len() {
        return Err(Error::format(
            format!("{} trailing bytes after the tensor directory", bytes.len() - r.offset),
            Some(r.offset as u64),
        ));
    }
    Ok(params)
}
