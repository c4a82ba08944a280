//! Plain-text operator matrices, so estimated kernels and responses are
//! diffable next to their image exports.
//!
//! Kernel files: first line is the odd size `K`, then `K` rows of `K`
//! whitespace-separated floats. SRF files: first line `out_bands in_bands`,
//! then one row per output band. Floats print in shortest-roundtrip form.

use crate::cube::{BlurKernel, SrfMatrix};
use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

pub fn save_kernel_text(kernel: &BlurKernel, path: &Path) -> Result<()> {
    let k = kernel.size();
    let mut out = format!("{k}\n");
    for r in 0..k {
        let row: Vec<String> = (0..k).map(|c| format!("{}", kernel.get(r, c))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_kernel_text(path: &Path) -> Result<BlurKernel> {
    let content = fs::read_to_string(path)?;
    let mut tokens = content.split_whitespace();
    let size: usize = tokens
        .next()
        .ok_or_else(|| Error::format("empty kernel file", Some(0)))?
        .parse()
        .map_err(|_| Error::format("kernel size is not an integer", Some(0)))?;
    let mut weights = Vec::with_capacity(size * size);
    for token in tokens {
        let v: f64 = token
            .parse()
            .map_err(|_| Error::format(format!("invalid kernel value '{token}'"), None))?;
        weights.push(v);
    }
    if weights.len() != size * size {
        return Err(Error::format(
            format!("kernel file has {} values, expected {}", weights.len(), size * size),
            None,
        ));
    }
    BlurKernel::new(size, weights)
}

pub fn save_srf_text(srf: &SrfMatrix, path: &Path) -> Result<()> {
    let mut out = format!("{} {}\n", srf.out_bands(), srf.in_bands());
    for j in 0..srf.out_bands() {
        let row: Vec<String> = srf.row(j).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_srf_text(path: &Path) -> Result<SrfMatrix> {
    let content = fs::read_to_string(path)?;
    let mut tokens = content.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::format(format!("missing {what}"), Some(0)))?
            .parse()
            .map_err(|_| Error::format(format!("{what} is not an integer"), Some(0)))
    };
    let out_bands = dim("output band count")?;
    let in_bands = dim("input band count")?;
    let mut weights = Vec::with_capacity(out_bands * in_bands);
    for token in tokens {
        let v: f64 = token
            .parse()
            .map_err(|_| Error::format(format!("invalid SRF value '{token}'"), None))?;
        weights.push(v);
    }
    if weights.len() != out_bands * in_bands {
        return Err(Error::format(
            format!("SRF file has {} values, expected {}", weights.len(), out_bands * in_bands),
            None,
        ));
    }
    SrfMatrix::new(out_bands, in_bands, weights)
}
