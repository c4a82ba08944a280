//! Binary PPM (P6) export of pseudo-color views, error maps, and operator
//! visualizations.
//!
//! Stretch convention: each exported channel maps through
//! `byte = round(255 * (v - min) / (max - min))`; a channel whose spread is
//! below 1e-12 maps to mid-gray (128). The error-map color scale is the
//! documented heat lookup in [`heat_color`], applied to the per-pixel mean
//! absolute spectral error clamped at [`ERROR_MAP_SCALE`].

use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Error value mapped to the hottest color in error maps.
pub const ERROR_MAP_SCALE: f64 = 0.25;

fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    debug_assert_eq!(rgb.len(), width * height * 3);
    let mut file = fs::File::create(path)?;
    file.write_all(format!("P6\n{width} {height}\n255\n").as_bytes())?;
    file.write_all(rgb)?;
    Ok(())
}

fn stretch_band(values: &[f64]) -> Vec<u8> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 1e-12 {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|&v| {
            let t = 255.0 * (v - min) / (max - min);
            t.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// Export three bands as an RGB pseudo-color image, each band min-max
/// stretched independently.
pub fn export_pseudocolor(cube: &HsiCube, bands: (usize, usize, usize), path: &Path) -> Result<()> {
    let (total, h, w) = cube.shape();
    for b in [bands.0, bands.1, bands.2] {
        if b >= total {
            return Err(Error::param(format!("band {b} out of range (cube has {total})")));
        }
    }
    let r = stretch_band(cube.band(bands.0));
    let g = stretch_band(cube.band(bands.1));
    let b = stretch_band(cube.band(bands.2));
    let mut rgb = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        rgb.extend_from_slice(&[r[i], g[i], b[i]]);
    }
    write_ppm(path, w, h, &rgb)
}

/// Heat lookup for error maps: black to red to yellow to white, piecewise
/// linear in thirds of `t` (clamped to [0, 1]).
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let ramp = |x: f64| (765.0 * x).round().clamp(0.0, 255.0) as u8;
    if t < 1.0 / 3.0 {
        [ramp(t), 0, 0]
    } else if t < 2.0 / 3.0 {
        [255, ramp(t - 1.0 / 3.0), 0]
    } else {
        [255, 255, ramp(t - 2.0 / 3.0)]
    }
}

/// Export the per-pixel mean absolute spectral error on the fixed heat
/// scale.
pub fn export_error_map(reference: &HsiCube, estimate: &HsiCube, path: &Path) -> Result<()> {
    reference.check_same_shape(estimate)?;
    let (bands, h, w) = reference.shape();
    let mut rgb = Vec::with_capacity(h * w * 3);
    for px in 0..h * w {
        let mut acc = 0.0;
        for b in 0..bands {
            acc += (reference.band(b)[px] - estimate.band(b)[px]).abs();
        }
        let t = acc / bands as f64 / ERROR_MAP_SCALE;
        rgb.extend_from_slice(&heat_color(t));
    }
    write_ppm(path, w, h, &rgb)
}

/// Export a kernel as a min-max stretched grayscale image, one pixel per
/// tap.
pub fn export_kernel_image(kernel: &BlurKernel, path: &Path) -> Result<()> {
    let k = kernel.size();
    let gray = stretch_band(kernel.weights());
    let mut rgb = Vec::with_capacity(k * k * 3);
    for &g in &gray {
        rgb.extend_from_slice(&[g, g, g]);
    }
    write_ppm(path, k, k, &rgb)
}

/// Export an SRF as a min-max stretched grayscale image, rows are output
/// bands.
pub fn export_srf_image(srf: &SrfMatrix, path: &Path) -> Result<()> {
    let gray = stretch_band(srf.weights());
    let mut rgb = Vec::with_capacity(gray.len() * 3);
    for &g in &gray {
        rgb.extend_from_slice(&[g, g, g]);
    }
    write_ppm(path, srf.in_bands(), srf.out_bands(), &rgb)
}
