//! Binary cube container.
//!
//! Layout, all little-endian: magic `HSIC`, version `u32` (currently 1),
//! `bands`, `height`, `width` as `u32`, then `bands * height * width`
//! 32-bit floats in band-major order. Values quantize to `f32` on save.

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"HSIC";
const VERSION: u32 = 1;

/// Largest element count accepted on load; guards against corrupt headers
/// requesting absurd allocations.
const MAX_ELEMENTS: u64 = 1 << 31;

pub fn save_cube(cube: &HsiCube, path: &Path) -> Result<()> {
    let (bands, height, width) = cube.shape();
    let mut buf = Vec::with_capacity(20 + cube.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [bands, height, width] {
        let v = u32::try_from(dim)
            .map_err(|_| Error::format(format!("dimension {dim} exceeds u32"), None))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in cube.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::format(
            format!("file truncated at byte {offset}, expected 4 more bytes"),
            Some(offset as u64),
        ));
    }
    Ok(u32::from_le_bytes(bytes[offset..end].try_into().unwrap()))
}

pub fn load_cube(path: &Path) -> Result<HsiCube> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Err(Error::format(
            format!("file has {} bytes, too short for the 4-byte magic", bytes.len()),
            Some(0),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(
            format!("bad magic {:?} at offset 0, expected \"HSIC\"", &bytes[0..4]),
            Some(0),
        ));
    }
    let version = read_u32(&bytes, 4)?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}"), Some(4)));
    }
    let bands = read_u32(&bytes, 8)? as u64;
    let height = read_u32(&bytes, 12)? as u64;
    let width = read_u32(&bytes, 16)? as u64;
    let count = bands
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .filter(|&v| v <= MAX_ELEMENTS)
        .ok_or_else(|| {
            Error::format(format!("dimensions {bands}x{height}x{width} overflow"), Some(8))
        })?;
    let expected = 20 + count * 4;
    if (bytes.len() as u64) != expected {
        return Err(Error::format(
            format!("payload is {} bytes, header implies {}", bytes.len() - 20.min(bytes.len()), expected - 20),
            Some(20),
        ));
    }
    let mut data = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let off = 20 + i * 4;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(format!("non-finite payload value at element {i}"), Some(off as u64)));
        }
        data.push(v as f64);
    }
    HsiCube::from_vec(bands as usize, height as usize, width as usize, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use std::io::Write;

    #[test]
    fn round_trip_is_exact_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.hsic");
        let mut rng = Rng::new(1);
        let cube = HsiCube::from_fn(4, 8, 8, |_, _, _| rng.normal()).unwrap();
        save_cube(&cube, &path).unwrap();
        let loaded = load_cube(&path).unwrap();
        assert_eq!(loaded.shape(), cube.shape());
        for (&a, &b) in cube.data().iter().zip(loaded.data()) {
            let quantized = a as f32 as f64;
            assert_eq!(b, quantized, "load deviates from f32 quantization");
        }
    }

    #[test]
    fn wrong_magic_names_the_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hsic");
        std::fs::File::create(&path)
            .unwrap()
            .write_all(b"NOPE00000000000000000000")
            .unwrap();
        match load_cube(&path) {
            Err(Error::Format { message, offset }) => {
                assert_eq!(offset, Some(0));
                assert!(message.contains("magic"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_truncation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.hsic");
        std::fs::File::create(&path).unwrap();
        assert!(matches!(load_cube(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.hsic");
        let cube = HsiCube::new(2, 4, 4, 0.5).unwrap();
        save_cube(&cube, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_cube(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn overflowing_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("huge.hsic");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"HSIC");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_cube(&path) {
            Err(Error::Format { message, .. }) => assert!(message.contains("overflow")),
            other => panic!("expected overflow error, got {other:?}"),
        }
    }
}
