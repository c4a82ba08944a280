//! Reconstruction quality metrics: RMSE, PSNR, SAM, and SSIM.
//!
//! Scale conventions: RMSE is reported on a 0-255 scale (matching the
//! magnitudes customary in fusion result tables), PSNR on the [0, 1] range
//! with per-band averaging and a 100 dB cap, SAM in degrees averaged over
//! pixels, SSIM with the original 11x11 sigma-1.5 Gaussian window and
//! C1=(0.01)^2, C2=(0.03)^2 on unit dynamic range.

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use serde::Serialize;

/// PSNR value reported for exact matches.
pub const PSNR_CAP_DB: f64 = 100.0;

/// One row of quality numbers for an (estimate, reference) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    /// Root-mean-square error on a 0-255 scale.
    pub rmse: f64,
    /// Peak signal-to-noise ratio in dB, band-averaged, capped at 100.
    pub psnr: f64,
    /// Mean spectral angle in degrees.
    pub sam: f64,
    /// Mean structural similarity in [-1, 1].
    pub ssim: f64,
}

impl MetricReport {
    /// Evaluate all four metrics.
    pub fn compute(reference: &HsiCube, estimate: &HsiCube) -> Result<Self> {
        Ok(MetricReport {
            rmse: rmse(reference, estimate)?,
            psnr: psnr(reference, estimate)?,
            sam: sam(reference, estimate)?,
            ssim: ssim(reference, estimate)?,
        })
    }

    /// CSV cells `rmse,psnr,sam,ssim` with 4 decimal places.
    pub fn to_csv_row(&self) -> String {
        format!("{:.4},{:.4},{:.4},{:.4}", self.rmse, self.psnr, self.sam, self.ssim)
    }

    pub const CSV_HEADER: &'static str = "RMSE,PSNR,SAM,SSIM";
}

/// Root-mean-square error over all elements after scaling both cubes by 255.
pub fn rmse(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    let acc: f64 = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(&r, &e)| {
            let d = 255.0 * (r - e);
            d * d
        })
        .sum();
    Ok((acc / reference.len() as f64).sqrt())
}

/// Band-averaged PSNR on the [0, 1] range. Bands with mean squared error
/// below 1e-10 (including exact matches) contribute the 100 dB cap.
pub fn psnr(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    let (bands, h, w) = reference.shape();
    let n = (h * w) as f64;
    let mut total = 0.0;
    for b in 0..bands {
        let mse: f64 = reference
            .band(b)
            .iter()
            .zip(estimate.band(b))
            .map(|(&r, &e)| (r - e) * (r - e))
            .sum::<f64>()
            / n;
        let value = if mse <= 0.0 { PSNR_CAP_DB } else { (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB) };
        total += value;
    }
    Ok(total / bands as f64)
}

/// Mean spectral angle in degrees over pixels. Pixels where either spectrum
/// has norm below 1e-12 contribute zero.
pub fn sam(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    let (bands, h, w) = reference.shape();
    if bands < 2 {
        return Err(Error::shape("SAM needs at least 2 bands"));
    }
    let n = h * w;
    let mut total = 0.0;
    for px in 0..n {
        let mut dot = 0.0;
        let mut nr2 = 0.0;
        let mut ne2 = 0.0;
        for b in 0..bands {
            let r = reference.band(b)[px];
            let e = estimate.band(b)[px];
            dot += r * e;
            nr2 += r * r;
            ne2 += e * e;
        }
        if nr2 < 1e-24 || ne2 < 1e-24 {
            continue;
        }
        // Compare in the squared domain first so exactly parallel spectra
        // (identical cubes, positive rescalings) report an angle of zero
        // instead of acos rounding noise.
        let den2 = nr2 * ne2;
        let angle = if dot * dot >= den2 {
            if dot >= 0.0 {
                0.0
            } else {
                std::f64::consts::PI
            }
        } else {
            (dot / den2.sqrt()).clamp(-1.0, 1.0).acos()
        };
        total += angle;
    }
    Ok(total / n as f64 * 180.0 / std::f64::consts::PI)
}

/// SSIM window size (per the original formulation).
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn ssim_window_weights() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as i64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for r in -half..=half {
        for c in -half..=half {
            w.push((-((r * r + c * c) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Mean SSIM: per-band maps over valid (fully interior) 11x11 windows,
/// averaged over window positions, then over bands.
pub fn ssim(reference: &HsiCube, estimate: &HsiCube) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    let (bands, h, w) = reference.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!(
            "SSIM needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let weights = ssim_window_weights();
    let (vh, vw) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut band_total = 0.0;
    for b in 0..bands {
        let x = reference.band(b);
        let y = estimate.band(b);
        let mut map_total = 0.0;
        for r0 in 0..vh {
            for c0 in 0..vw {
                let mut mx = 0.0;
                let mut my = 0.0;
                let mut mxx = 0.0;
                let mut myy = 0.0;
                let mut mxy = 0.0;
                let mut wi = 0;
                for dr in 0..SSIM_WINDOW {
                    let row = (r0 + dr) * w + c0;
                    for dc in 0..SSIM_WINDOW {
                        let wt = weights[wi];
                        wi += 1;
                        let xv = x[row + dc];
                        let yv = y[row + dc];
                        mx += wt * xv;
                        my += wt * yv;
                        mxx += wt * xv * xv;
                        myy += wt * yv * yv;
                        mxy += wt * xv * yv;
                    }
                }
                let vx = mxx - mx * mx;
                let vy = myy - my * my;
                let cov = mxy - mx * my;
                let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2);
                let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
                map_total += num / den;
            }
        }
        band_total += map_total / (vh * vw) as f64;
    }
    Ok(band_total / bands as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use approx::assert_relative_eq;

    fn random_cube(bands: usize, h: usize, w: usize, seed: u64) -> HsiCube {
        let mut rng = Rng::new(seed);
        HsiCube::from_fn(bands, h, w, |_, _, _| rng.uniform()).unwrap()
    }

    #[test]
    fn identical_cubes_hit_all_fixed_points() {
        let c = random_cube(3, 12, 12, 1);
        assert_eq!(rmse(&c, &c).unwrap(), 0.0);
        assert_eq!(psnr(&c, &c).unwrap(), PSNR_CAP_DB);
        assert_eq!(sam(&c, &c).unwrap(), 0.0);
        assert!((ssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_full_range_offset_is_255() {
        let a = HsiCube::new(2, 3, 3, 0.0).unwrap();
        let b = HsiCube::new(2, 3, 3, 1.0).unwrap();
        assert_relative_eq!(rmse(&a, &b).unwrap(), 255.0, epsilon = 1e-12);
    }

    #[test]
    fn rmse_direct_formula() {
        let a = HsiCube::new(2, 3, 3, 0.0).unwrap();
        let b = HsiCube::new(2, 3, 3, 0.01).unwrap();
        assert_relative_eq!(rmse(&a, &b).unwrap(), 2.55, epsilon = 1e-12);
    }

    #[test]
    fn psnr_uniform_errors() {
        let a = random_cube(4, 6, 6, 2);
        let b = a.map(|v| v + 0.01).unwrap();
        assert_relative_eq!(psnr(&a, &b).unwrap(), 40.0, epsilon = 1e-9);
        let c = a.map(|v| v + 0.1).unwrap();
        assert_relative_eq!(psnr(&a, &c).unwrap(), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn psnr_decreases_with_error() {
        let a = random_cube(2, 6, 6, 3);
        let mut last = f64::INFINITY;
        for mag in [0.001, 0.01, 0.05, 0.2] {
            let b = a.map(|v| v + mag).unwrap();
            let p = psnr(&a, &b).unwrap();
            assert!(p < last, "psnr not decreasing at {mag}");
            last = p;
        }
    }

    #[test]
    fn sam_scale_invariance_and_right_angles() {
        let a = random_cube(3, 4, 4, 4);
        let doubled = a.scale(2.0).unwrap();
        assert_eq!(sam(&a, &doubled).unwrap(), 0.0);

        let e1 = HsiCube::from_fn(2, 4, 4, |b, _, _| if b == 0 { 1.0 } else { 0.0 }).unwrap();
        let e2 = HsiCube::from_fn(2, 4, 4, |b, _, _| if b == 1 { 1.0 } else { 0.0 }).unwrap();
        assert_relative_eq!(sam(&e1, &e2).unwrap(), 90.0, epsilon = 1e-9);
    }

    #[test]
    fn sam_45_degrees() {
        let a = HsiCube::from_fn(2, 4, 4, |_, _, _| 1.0).unwrap();
        let b = HsiCube::from_fn(2, 4, 4, |band, _, _| if band == 0 { 1.0 } else { 0.0 }).unwrap();
        assert_relative_eq!(sam(&a, &b).unwrap(), 45.0, epsilon = 1e-9);
    }

    #[test]
    fn sam_zero_norm_pixels_contribute_zero() {
        let a = HsiCube::new(2, 4, 4, 0.0).unwrap();
        let b = random_cube(2, 4, 4, 5);
        assert_eq!(sam(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        // Constant vs constant differing by 0.5: variance terms vanish and
        // only the luminance factor remains.
        let a = HsiCube::new(1, 12, 12, 0.25).unwrap();
        let b = HsiCube::new(1, 12, 12, 0.75).unwrap();
        let (mx, my) = (0.25, 0.75);
        let expect = (2.0 * mx * my + SSIM_C1) / (mx * mx + my * my + SSIM_C1);
        assert_relative_eq!(ssim(&a, &b).unwrap(), expect, epsilon = 1e-12);
    }

    /// Independent direct-windowed SSIM oracle: plain nested loops with
    /// explicitly accumulated weighted moments per window.
    fn ssim_oracle(x: &HsiCube, y: &HsiCube) -> f64 {
        let (bands, h, w) = x.shape();
        let half = 5i64;
        // Build the window in a different order (column-major) to keep the
        // oracle independent of the implementation path.
        let mut wts = vec![0.0; 121];
        let mut sum = 0.0;
        for c in -half..=half {
            for r in -half..=half {
                let v = (-((r * r + c * c) as f64) / 4.5).exp();
                wts[((r + half) * 11 + (c + half)) as usize] = v;
                sum += v;
            }
        }
        for v in &mut wts {
            *v /= sum;
        }
        let mut per_band = 0.0;
        for b in 0..bands {
            let mut map_sum = 0.0;
            let mut count = 0;
            for cr in half..(h as i64 - half) {
                for cc in half..(w as i64 - half) {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    for dr in -half..=half {
                        for dc in -half..=half {
                            let wt = wts[((dr + half) * 11 + (dc + half)) as usize];
                            mx += wt * x.get(b, (cr + dr) as usize, (cc + dc) as usize);
                            my += wt * y.get(b, (cr + dr) as usize, (cc + dc) as usize);
                        }
                    }
                    let mut vx = 0.0;
                    let mut vy = 0.0;
                    let mut cov = 0.0;
                    for dr in -half..=half {
                        for dc in -half..=half {
                            let wt = wts[((dr + half) * 11 + (dc + half)) as usize];
                            let xv = x.get(b, (cr + dr) as usize, (cc + dc) as usize);
                            let yv = y.get(b, (cr + dr) as usize, (cc + dc) as usize);
                            vx += wt * xv * xv;
                            vy += wt * yv * yv;
                            cov += wt * xv * yv;
                        }
                    }
                    vx -= mx * mx;
                    vy -= my * my;
                    cov -= mx * my;
                    map_sum += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                    count += 1;
                }
            }
            per_band += map_sum / count as f64;
        }
        per_band / bands as f64
    }

    #[test]
    fn ssim_inverted_pattern_matches_oracle_and_can_go_negative() {
        // High-variance checkerboard against its inverse.
        let a = HsiCube::from_fn(1, 16, 16, |_, r, c| ((r + c) % 2) as f64).unwrap();
        let b = a.map(|v| 1.0 - v).unwrap();
        let got = ssim(&a, &b).unwrap();
        let expect = ssim_oracle(&a, &b);
        assert_relative_eq!(got, expect, epsilon = 1e-12);
        assert!(got < 0.0, "inverted checkerboard ssim should be negative, got {got}");
    }

    #[test]
    fn ssim_random_pair_matches_oracle() {
        let a = random_cube(2, 14, 13, 6);
        let b = random_cube(2, 14, 13, 7);
        assert_relative_eq!(ssim(&a, &b).unwrap(), ssim_oracle(&a, &b), epsilon = 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = HsiCube::new(1, 8, 8, 0.1).unwrap();
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn metrics_reject_shape_mismatch() {
        let a = random_cube(2, 12, 12, 8);
        let b = random_cube(2, 12, 11, 9);
        assert!(rmse(&a, &b).is_err());
        assert!(psnr(&a, &b).is_err());
        assert!(sam(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
    }

    #[test]
    fn report_csv_has_four_decimals() {
        let report = MetricReport { rmse: 2.9666, psnr: 39.3777, sam: 6.75, ssim: 0.98381 };
        assert_eq!(report.to_csv_row(), "2.9666,39.3777,6.7500,0.9838");
    }
}
