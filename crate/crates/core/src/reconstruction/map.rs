//! Pixel-space MAP reconstruction: gradient descent on the data-fidelity
//! objective plus an optional regularizer, starting from the bicubic
//! upsampling of the low-resolution observation.

use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::degeneration::{
    spatial_degrade, spatial_degrade_adjoint, spectral_degrade, spectral_degrade_adjoint,
};
use crate::error::{Error, Result};
use crate::resample::bicubic_upsample;

/// Image prior used by [`map_reconstruct`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// Squared forward differences (smoothness penalty) with weight lambda.
    Tikhonov(f64),
    /// Isotropic total variation with weight lambda, smoothed near zero.
    TotalVariation(f64),
}

impl Regularizer {
    fn weight(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::Tikhonov(l) | Regularizer::TotalVariation(l) => l,
        }
    }
}

/// Smoothing constant inside the TV square root.
const TV_EPS2: f64 = 1e-16;

/// Consecutive objective increases treated as divergence.
const DIVERGENCE_PATIENCE: usize = 5;

/// Forward differences at (r, c): zero past the last row/column.
#[inline]
fn diffs(band: &[f64], h: usize, w: usize, r: usize, c: usize) -> (f64, f64) {
    let here = band[r * w + c];
    let dx = if c + 1 < w { band[r * w + c + 1] - here } else { 0.0 };
    let dy = if r + 1 < h { band[(r + 1) * w + c] - here } else { 0.0 };
    (dx, dy)
}

/// Isotropic total variation: sum over bands and pixels of the forward
/// difference magnitudes.
pub fn total_variation(z: &HsiCube) -> f64 {
    let (bands, h, w) = z.shape();
    let mut acc = 0.0;
    for b in 0..bands {
        let band = z.band(b);
        for r in 0..h {
            for c in 0..w {
                let (dx, dy) = diffs(band, h, w, r, c);
                acc += (dx * dx + dy * dy).sqrt();
            }
        }
    }
    acc
}

/// Regularizer value and gradient (scaled by the weight) added into `grad`.
fn apply_regularizer(reg: &Regularizer, z: &HsiCube, grad: &mut [f64]) -> f64 {
    let lambda = reg.weight();
    if lambda == 0.0 {
        return 0.0;
    }
    let (bands, h, w) = z.shape();
    let mut value = 0.0;
    for b in 0..bands {
        let band = z.band(b);
        let gband = &mut grad[b * h * w..(b + 1) * h * w];
        for r in 0..h {
            for c in 0..w {
                let (dx, dy) = diffs(band, h, w, r, c);
                match reg {
                    Regularizer::Tikhonov(_) => {
                        value += dx * dx + dy * dy;
                        if c + 1 < w {
                            gband[r * w + c + 1] += lambda * 2.0 * dx;
                            gband[r * w + c] -= lambda * 2.0 * dx;
                        }
                        if r + 1 < h {
                            gband[(r + 1) * w + c] += lambda * 2.0 * dy;
                            gband[r * w + c] -= lambda * 2.0 * dy;
                        }
                    }
                    Regularizer::TotalVariation(_) => {
                        let mag = (dx * dx + dy * dy + TV_EPS2).sqrt();
                        value += mag;
                        if c + 1 < w {
                            gband[r * w + c + 1] += lambda * dx / mag;
                            gband[r * w + c] -= lambda * dx / mag;
                        }
                        if r + 1 < h {
                            gband[(r + 1) * w + c] += lambda * dy / mag;
                            gband[r * w + c] -= lambda * dy / mag;
                        }
                    }
                    Regularizer::None => unreachable!(),
                }
            }
        }
    }
    lambda * value
}

/// Gradient descent on
/// `||X - Phi(Z)||^2 + ||Y - Psi(Z)||^2 + lambda R(Z)`
/// from `Z0 = bicubic_upsample(X, s)`. Returns the best-loss iterate.
/// Diverging runs (objective rising five consecutive iterations) abort with
/// the objective trace.
pub fn map_reconstruct(
    x: &HsiCube,
    y: &HsiCube,
    kernel: &BlurKernel,
    srf: &SrfMatrix,
    s: usize,
    reg: Regularizer,
    iters: usize,
    lr: f64,
) -> Result<HsiCube> {
    let (bands, xh, xw) = x.shape();
    let (h, w) = (xh * s, xw * s);
    if y.shape() != (srf.out_bands(), h, w) {
        return Err(Error::shape(format!(
            "MSI shape {:?} inconsistent with target {}x{} and SRF {} bands",
            y.shape(),
            h,
            w,
            srf.out_bands()
        )));
    }
    if srf.in_bands() != bands {
        return Err(Error::shape(format!(
            "SRF expects {} bands, HSI has {bands}",
            srf.in_bands()
        )));
    }

    let mut z = bicubic_upsample(x, s)?;
    let mut best = z.clone();
    let mut best_loss = f64::INFINITY;
    let mut trace = Vec::with_capacity(iters + 1);
    let mut rising = 0usize;

    for _ in 0..=iters {
        let rx = spatial_degrade(&z, kernel, s)?.sub(x)?;
        let ry = spectral_degrade(&z, srf)?.sub(y)?;

        let gx = spatial_degrade_adjoint(&rx, kernel, s, (h, w))?;
        let gy = spectral_degrade_adjoint(&ry, srf)?;
        let mut grad: Vec<f64> = gx
            .data()
            .iter()
            .zip(gy.data())
            .map(|(&a, &b)| 2.0 * (a + b))
            .collect();
        let reg_value = apply_regularizer(&reg, &z, &mut grad);

        let loss = rx.dot(&rx)? + ry.dot(&ry)? + reg_value;
        if !loss.is_finite() {
            return Err(Error::solver("MAP objective became non-finite", trace));
        }
        if loss < best_loss {
            best_loss = loss;
            best = z.clone();
        }
        if let Some(&prev) = trace.last() {
            if loss > prev + 1e-15 {
                rising += 1;
                if rising >= DIVERGENCE_PATIENCE {
                    trace.push(loss);
                    return Err(Error::solver(
                        format!("MAP gradient descent diverged at lr {lr}"),
                        trace,
                    ));
                }
            } else {
                rising = 0;
            }
        }
        trace.push(loss);

        if trace.len() > iters {
            break;
        }
        let zd = z.data_mut();
        for (v, g) in zd.iter_mut().zip(&grad) {
            *v -= lr * g;
        }
    }
    Ok(best)
}
