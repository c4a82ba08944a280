//! Spatial resampling of cubes.
//!
//! Upsampling maps target pixel centers back to source coordinates with the
//! center-aligned convention `src = (dst + 0.5) / s - 0.5`, so an integer
//! factor of 1 is the identity and constant images stay constant.

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// Catmull-Rom cubic weight (a = -0.5) at offset `t`.
#[inline]
pub fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t * t * t - (A + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        A * t * t * t - 5.0 * A * t * t + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Per-band bicubic upsampling by an integer factor, edge-clamped.
pub fn bicubic_upsample(x: &HsiCube, s: usize) -> Result<HsiCube> {
    if s == 0 {
        return Err(Error::param("upsample factor must be >= 1"));
    }
    if s == 1 {
        return Ok(x.clone());
    }
    let (bands, h, w) = x.shape();
    let (oh, ow) = (h * s, w * s);

    // Separable: precompute the 4-tap sample positions and weights per output
    // row and column once, then apply the tensor product per band.
    let row_taps = axis_taps(oh, h, s);
    let col_taps = axis_taps(ow, w, s);

    let mut out = vec![0.0; bands * oh * ow];
    let mut tmp = vec![0.0; h * ow];
    for b in 0..bands {
        let src = x.band(b);
        // Horizontal pass into tmp (h x ow).
        for r in 0..h {
            let row = &src[r * w..(r + 1) * w];
            let dst = &mut tmp[r * ow..(r + 1) * ow];
            for (c, (idx, wt)) in col_taps.iter().enumerate() {
                dst[c] = idx
                    .iter()
                    .zip(wt.iter())
                    .map(|(&i, &we)| row[i] * we)
                    .sum();
            }
        }
        // Vertical pass into out.
        let band_out = &mut out[b * oh * ow..(b + 1) * oh * ow];
        for (r, (idx, wt)) in row_taps.iter().enumerate() {
            for c in 0..ow {
                let mut acc = 0.0;
                for (&i, &we) in idx.iter().zip(wt.iter()) {
                    acc += tmp[i * ow + c] * we;
                }
                band_out[r * ow + c] = acc;
            }
        }
    }
    let mut cube = HsiCube::from_vec(bands, oh, ow, out)?;
    cube.value_range = x.value_range;
    Ok(cube)
}

/// 4-tap source indices (edge-clamped) and Catmull-Rom weights for each
/// output position along one axis.
fn axis_taps(out_n: usize, in_n: usize, s: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..out_n)
        .map(|o| {
            let src = (o as f64 + 0.5) / s as f64 - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut wt = [0f64; 4];
            for t in 0..4 {
                let off = t as i64 - 1;
                idx[t] = clamp_index(base as i64 + off, in_n);
                wt[t] = cubic_weight(frac - off as f64);
            }
            (idx, wt)
        })
        .collect()
}

/// 2-tap (lower index, upper index, fraction) positions for linear
/// interpolation along one axis, center-aligned and edge-clamped.
pub(crate) fn linear_taps(out_n: usize, in_n: usize, s: usize) -> Vec<(usize, usize, f64)> {
    (0..out_n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / s as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_n - 1);
            let i1 = (i0 + 1).min(in_n - 1);
            (i0, i1, src - src.floor())
        })
        .collect()
}

/// Per-band bilinear upsampling by an integer factor, edge-clamped. Shares
/// the center-aligned coordinate convention with [`bicubic_upsample`].
pub fn bilinear_upsample(x: &HsiCube, s: usize) -> Result<HsiCube> {
    if s == 0 {
        return Err(Error::param("upsample factor must be >= 1"));
    }
    if s == 1 {
        return Ok(x.clone());
    }
    let (bands, h, w) = x.shape();
    let (oh, ow) = (h * s, w * s);
    let row_taps = linear_taps(oh, h, s);
    let col_taps = linear_taps(ow, w, s);
    let mut out = vec![0.0; bands * oh * ow];
    for b in 0..bands {
        let src = x.band(b);
        let band_out = &mut out[b * oh * ow..(b + 1) * oh * ow];
        for (r, &(r0, r1, fr)) in row_taps.iter().enumerate() {
            for (c, &(c0, c1, fc)) in col_taps.iter().enumerate() {
                let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
                let bot = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
                band_out[r * ow + c] = top * (1.0 - fr) + bot * fr;
            }
        }
    }
    let mut cube = HsiCube::from_vec(bands, oh, ow, out)?;
    cube.value_range = x.value_range;
    Ok(cube)
}
