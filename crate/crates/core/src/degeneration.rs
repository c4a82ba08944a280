//! Forward degeneration operators and observation synthesis.
//!
//! The observation model is: the low-resolution hyperspectral image is the
//! latent cube blurred per band and decimated, the high-resolution
//! multispectral image is the latent cube mixed through a spectral response
//! matrix, and both observations carry additive white Gaussian noise
//! calibrated to a requested SNR.
//!
//! Conventions fixed here (the operators and their adjoints must agree on
//! every one of them):
//! - the spatial primitive is correlation, not flipped convolution;
//! - boundary handling is edge-inclusive symmetric reflection;
//! - decimation keeps samples at offsets `floor(s/2) + i*s` (center of each
//!   `s x s` block);
//! - noise power is referenced to mean signal power `mean(x^2)`.

use crate::cube::{BlurKernel, HsiCube, SrfMatrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Spatial blur specification for simulation.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    Gaussian(GaussianSpec),
    Motion(MotionSpec),
    Explicit(BlurKernel),
}

/// Isotropic Gaussian blur. The sampler draws `size` from `[5, 15]` (odd) and
/// `sigma` from `[0.5, 2]`; explicit construction may exceed those ranges.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSpec {
    pub size: usize,
    pub sigma: f64,
}

/// Straight-line motion blur: a segment of `length` pixels at `angle`
/// radians, `thickness` pixels wide, rasterized with anti-aliasing.
#[derive(Debug, Clone, Copy)]
pub struct MotionSpec {
    pub length: usize,
    pub angle: f64,
    pub thickness: f64,
}

/// Everything needed to degrade one high-resolution cube into an observation
/// pair.
#[derive(Debug, Clone)]
pub struct DegenerationConfig {
    pub scale: usize,
    pub kernel_spec: KernelSpec,
    pub srf_base: SrfMatrix,
    /// Strength of the seed-derived SRF perturbation; 0 leaves the sharpened
    /// base response untouched.
    pub srf_perturb_c: f64,
    /// SNR of the low-resolution hyperspectral observation, dB
    /// (`f64::INFINITY` disables noise).
    pub snr_hsi_db: f64,
    /// SNR of the high-resolution multispectral observation, dB.
    pub snr_msi_db: f64,
}

/// Isotropic Gaussian kernel sampled at integer offsets, normalized.
pub fn gaussian_kernel(spec: &GaussianSpec) -> Result<BlurKernel> {
    if spec.size == 0 || spec.size % 2 == 0 {
        return Err(Error::param(format!("gaussian kernel size must be odd, got {}", spec.size)));
    }
    if !(spec.sigma > 0.0) {
        return Err(Error::param(format!("gaussian sigma must be > 0, got {}", spec.sigma)));
    }
    let half = (spec.size / 2) as i64;
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut weights = Vec::with_capacity(spec.size * spec.size);
    for r in -half..=half {
        for c in -half..=half {
            weights.push((-((r * r + c * c) as f64) * inv).exp());
        }
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    BlurKernel::new(spec.size, weights)
}

/// Subsamples per pixel axis used when rasterizing motion kernels.
const MOTION_SUPERSAMPLES: usize = 16;

/// Anti-aliased motion kernel: coverage of a butt-capped segment (a rotated
/// `length x thickness` rectangle centered on the canvas), measured by
/// supersampling, normalized to sum one.
pub fn motion_kernel(spec: &MotionSpec) -> Result<BlurKernel> {
    if spec.length < 3 {
        return Err(Error::param(format!("motion length must be >= 3, got {}", spec.length)));
    }
    if !(spec.thickness >= 1.0) {
        return Err(Error::param(format!(
            "motion thickness must be >= 1, got {}",
            spec.thickness
        )));
    }
    // A segment is orientation-free; folding into [0, pi) makes angle and
    // angle+pi produce bit-identical kernels.
    let angle = spec.angle.rem_euclid(std::f64::consts::PI);
    let (dx, dy) = (angle.cos(), angle.sin());
    let half_len = spec.length as f64 / 2.0;
    let half_th = spec.thickness / 2.0;

    let hx = half_len * dx.abs() + half_th * dy.abs();
    let hy = half_len * dy.abs() + half_th * dx.abs();
    let m = ((hx.max(hy) - 0.5).ceil() as i64).max(1);
    let size = (2 * m + 1) as usize;

    let n = MOTION_SUPERSAMPLES;
    let mut weights = vec![0.0; size * size];
    for pr in -m..=m {
        for pc in -m..=m {
            let mut hits = 0usize;
            for sr in 0..n {
                for sc in 0..n {
                    let y = pr as f64 + (sr as f64 + 0.5) / n as f64 - 0.5;
                    let x = pc as f64 + (sc as f64 + 0.5) / n as f64 - 0.5;
                    // Coordinates along / across the segment direction.
                    let along = x * dx + y * dy;
                    let across = -x * dy + y * dx;
                    if along.abs() <= half_len && across.abs() <= half_th {
                        hits += 1;
                    }
                }
            }
            weights[((pr + m) * (2 * m + 1) + (pc + m)) as usize] = hits as f64;
        }
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::param("motion kernel rasterized to empty coverage"));
    }
    for w in &mut weights {
        *w /= total;
    }
    BlurKernel::new(size, weights)
}

/// Materialize a [`KernelSpec`] into a kernel.
pub fn build_kernel(spec: &KernelSpec) -> Result<BlurKernel> {
    match spec {
        KernelSpec::Gaussian(g) => gaussian_kernel(g),
        KernelSpec::Motion(m) => motion_kernel(m),
        KernelSpec::Explicit(k) => Ok(k.clone()),
    }
}

/// Row-wise softmax perturbation of an SRF with explicit sharpness.
///
/// Row `j` of the result is `softmax(kappa * base[j, .] + c * E[j, .])` where
/// `E` has independent standard normal entries drawn from `rng`. With `c = 0`
/// the result is `softmax(kappa * base)` regardless of the generator state.
pub fn perturb_srf_with_sharpness(
    base: &SrfMatrix,
    c: f64,
    kappa: f64,
    rng: &mut Rng,
) -> Result<SrfMatrix> {
    if c < 0.0 {
        return Err(Error::param(format!("perturbation coefficient must be >= 0, got {c}")));
    }
    let (b, in_bands) = (base.out_bands(), base.in_bands());
    let mut noise = vec![0.0; b * in_bands];
    rng.fill_normal(&mut noise);
    let mut weights = vec![0.0; b * in_bands];
    for j in 0..b {
        let row = base.row(j);
        let logits: Vec<f64> = (0..in_bands)
            .map(|i| kappa * row[i] + c * noise[j * in_bands + i])
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for i in 0..in_bands {
            weights[j * in_bands + i] = exps[i] / sum;
        }
    }
    SrfMatrix::new(b, in_bands, weights)
}

/// Row-wise softmax perturbation with the default sharpness `kappa = B`
/// (number of input bands), which keeps the unperturbed result close to the
/// normalized base response.
pub fn perturb_srf(base: &SrfMatrix, c: f64, rng: &mut Rng) -> Result<SrfMatrix> {
    perturb_srf_with_sharpness(base, c, base.in_bands() as f64, rng)
}

/// Reflected index for edge-inclusive symmetric padding. Valid whenever
/// `-n <= i <= 2n - 1`, which the kernel-size preconditions guarantee.
#[inline]
pub(crate) fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let j = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - 1 - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&j));
    j as usize
}

fn check_degrade_shapes(z: &HsiCube, k: &BlurKernel, s: usize) -> Result<()> {
    if s == 0 {
        return Err(Error::param("scale must be >= 1"));
    }
    let (_, h, w) = z.shape();
    if h % s != 0 || w % s != 0 {
        return Err(Error::shape(format!(
            "scale {s} must divide height {h} and width {w}"
        )));
    }
    if k.size() > h.min(w) {
        return Err(Error::shape(format!(
            "kernel size {} exceeds min spatial dimension {}",
            k.size(),
            h.min(w)
        )));
    }
    Ok(())
}

/// Spatial degeneration: per-band correlation with `k` under reflect padding,
/// then decimation by `s` keeping the center sample of each block.
pub fn spatial_degrade(z: &HsiCube, k: &BlurKernel, s: usize) -> Result<HsiCube> {
    check_degrade_shapes(z, k, s)?;
    let (bands, h, w) = z.shape();
    let (oh, ow) = (h / s, w / s);
    let ksize = k.size() as i64;
    let half = ksize / 2;
    let off = (s / 2) as i64;

    let mut out = vec![0.0; bands * oh * ow];
    for b in 0..bands {
        let src = z.band(b);
        let dst = &mut out[b * oh * ow..(b + 1) * oh * ow];
        for oi in 0..oh {
            let base_r = oi as i64 * s as i64 + off;
            for oj in 0..ow {
                let base_c = oj as i64 * s as i64 + off;
                let mut acc = 0.0;
                for u in 0..ksize {
                    let r = reflect(base_r + u - half, h);
                    let row = &src[r * w..(r + 1) * w];
                    for v in 0..ksize {
                        let c = reflect(base_c + v - half, w);
                        acc += k.get(u as usize, v as usize) * row[c];
                    }
                }
                dst[oi * ow + oj] = acc;
            }
        }
    }
    let mut cube = HsiCube::from_vec(bands, oh, ow, out)?;
    cube.value_range = z.value_range;
    Ok(cube)
}

/// Exact adjoint of [`spatial_degrade`] under the standard inner product:
/// the same gather pattern run as a scatter. `out_shape` is the
/// `(height, width)` of the high-resolution domain.
pub fn spatial_degrade_adjoint(
    x: &HsiCube,
    k: &BlurKernel,
    s: usize,
    out_shape: (usize, usize),
) -> Result<HsiCube> {
    let (bands, oh, ow) = x.shape();
    let (h, w) = out_shape;
    if h != oh * s || w != ow * s {
        return Err(Error::shape(format!(
            "adjoint target {h}x{w} inconsistent with input {oh}x{ow} at scale {s}"
        )));
    }
    if k.size() > h.min(w) {
        return Err(Error::shape(format!(
            "kernel size {} exceeds min spatial dimension {}",
            k.size(),
            h.min(w)
        )));
    }
    let ksize = k.size() as i64;
    let half = ksize / 2;
    let off = (s / 2) as i64;

    let mut out = vec![0.0; bands * h * w];
    for b in 0..bands {
        let src = x.band(b);
        let dst = &mut out[b * h * w..(b + 1) * h * w];
        for oi in 0..oh {
            let base_r = oi as i64 * s as i64 + off;
            for oj in 0..ow {
                let base_c = oj as i64 * s as i64 + off;
                let v_in = src[oi * ow + oj];
                for u in 0..ksize {
                    let r = reflect(base_r + u - half, h);
                    for v in 0..ksize {
                        let c = reflect(base_c + v - half, w);
                        dst[r * w + c] += k.get(u as usize, v as usize) * v_in;
                    }
                }
            }
        }
    }
    let mut cube = HsiCube::from_vec(bands, h, w, out)?;
    cube.value_range = x.value_range;
    Ok(cube)
}

/// Spectral degeneration: each output band is the SRF-weighted combination of
/// input bands at every pixel.
pub fn spectral_degrade(z: &HsiCube, p: &SrfMatrix) -> Result<HsiCube> {
    let (bands, h, w) = z.shape();
    if p.in_bands() != bands {
        return Err(Error::shape(format!(
            "SRF expects {} input bands, cube has {bands}",
            p.in_bands()
        )));
    }
    let n = h * w;
    let mut out = vec![0.0; p.out_bands() * n];
    for j in 0..p.out_bands() {
        let dst = &mut out[j * n..(j + 1) * n];
        for i in 0..bands {
            let wji = p.get(j, i);
            if wji == 0.0 {
                continue;
            }
            let src = z.band(i);
            for (d, &v) in dst.iter_mut().zip(src.iter()) {
                *d += wji * v;
            }
        }
    }
    let mut cube = HsiCube::from_vec(p.out_bands(), h, w, out)?;
    cube.value_range = z.value_range;
    Ok(cube)
}

/// Exact adjoint of [`spectral_degrade`]: the transpose response applied per
/// pixel.
pub fn spectral_degrade_adjoint(y: &HsiCube, p: &SrfMatrix) -> Result<HsiCube> {
    let (bands, h, w) = y.shape();
    if p.out_bands() != bands {
        return Err(Error::shape(format!(
            "SRF produces {} output bands, cube has {bands}",
            p.out_bands()
        )));
    }
    let n = h * w;
    let mut out = vec![0.0; p.in_bands() * n];
    for j in 0..bands {
        let src = y.band(j);
        for i in 0..p.in_bands() {
            let wji = p.get(j, i);
            if wji == 0.0 {
                continue;
            }
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, &v) in dst.iter_mut().zip(src.iter()) {
                *d += wji * v;
            }
        }
    }
    let mut cube = HsiCube::from_vec(p.in_bands(), h, w, out)?;
    cube.value_range = y.value_range;
    Ok(cube)
}

/// Additive white Gaussian noise with variance `mean(x^2) * 10^(-snr_db/10)`.
/// An infinite SNR returns the input unchanged.
pub fn add_awgn(x: &HsiCube, snr_db: f64, rng: &mut Rng) -> Result<HsiCube> {
    if snr_db.is_nan() {
        return Err(Error::param("SNR must be finite or +infinity"));
    }
    if snr_db.is_infinite() {
        if snr_db < 0.0 {
            return Err(Error::param("SNR of -infinity is not meaningful"));
        }
        return Ok(x.clone());
    }
    let sigma = (x.mean_sq() * 10f64.powf(-snr_db / 10.0)).sqrt();
    let (bands, h, w) = x.shape();
    let mut data = Vec::with_capacity(x.len());
    for &v in x.data() {
        data.push(v + sigma * rng.normal());
    }
    let mut out = HsiCube::from_vec(bands, h, w, data)?;
    out.value_range = x.value_range;
    Ok(out)
}

/// One synthetic observation pair plus the ground-truth operators that
/// produced it (returned for evaluation only).
pub struct SimulatedPair {
    pub lr_hsi: HsiCube,
    pub hr_msi: HsiCube,
    pub kernel_true: BlurKernel,
    pub srf_true: SrfMatrix,
}

/// Degrade a high-resolution cube into an observation pair per the config.
/// Substreams are derived from `rng` with fixed tags, so a given root seed
/// always produces byte-identical observations.
pub fn simulate_pair(z: &HsiCube, cfg: &DegenerationConfig, rng: &Rng) -> Result<SimulatedPair> {
    let kernel = build_kernel(&cfg.kernel_spec)?;
    if cfg.srf_base.in_bands() != z.bands() {
        return Err(Error::shape(format!(
            "SRF base expects {} bands, cube has {}",
            cfg.srf_base.in_bands(),
            z.bands()
        )));
    }
    let mut srf_rng = rng.derive(0x5346_5250); // "SRFP"
    let srf = perturb_srf(&cfg.srf_base, cfg.srf_perturb_c, &mut srf_rng)?;

    let x_clean = spatial_degrade(z, &kernel, cfg.scale)?;
    let y_clean = spectral_degrade(z, &srf)?;
    let mut x_rng = rng.derive(0x4e4f_4958); // "NOIX"
    let mut y_rng = rng.derive(0x4e4f_4959); // "NOIY"
    let lr_hsi = add_awgn(&x_clean, cfg.snr_hsi_db, &mut x_rng)?;
    let hr_msi = add_awgn(&y_clean, cfg.snr_msi_db, &mut y_rng)?;
    Ok(SimulatedPair { lr_hsi, hr_msi, kernel_true: kernel, srf_true: srf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_cube(bands: usize, h: usize, w: usize, seed: u64) -> HsiCube {
        let mut rng = Rng::new(seed);
        HsiCube::from_fn(bands, h, w, |_, _, _| rng.uniform()).unwrap()
    }

    // ---- gaussian kernels ----

    #[test]
    fn gaussian_size_one_is_delta() {
        let k = gaussian_kernel(&GaussianSpec { size: 1, sigma: 1.3 }).unwrap();
        assert_eq!(k.weights(), &[1.0]);
    }

    #[test]
    fn gaussian_is_four_fold_symmetric() {
        let k = gaussian_kernel(&GaussianSpec { size: 5, sigma: 1.0 }).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(k.get(i, j), k.get(4 - i, j));
                assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
    }

    #[test]
    fn gaussian_center_matches_closed_form() {
        // size 3, sigma 0.5: weights exp(-(i^2+j^2)/(2*0.25)), normalized.
        let k = gaussian_kernel(&GaussianSpec { size: 3, sigma: 0.5 }).unwrap();
        let e2 = (-2.0f64).exp();
        let e4 = (-4.0f64).exp();
        let total = 1.0 + 4.0 * e2 + 4.0 * e4;
        assert_relative_eq!(k.get(1, 1), 1.0 / total, epsilon = 1e-14);
        assert_relative_eq!(k.get(0, 1), e2 / total, epsilon = 1e-14);
        assert_relative_eq!(k.get(0, 0), e4 / total, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_rejects_even_size() {
        assert!(gaussian_kernel(&GaussianSpec { size: 4, sigma: 1.0 }).is_err());
    }

    // ---- motion kernels ----

    #[test]
    fn horizontal_motion_length3_is_three_taps() {
        let k = motion_kernel(&MotionSpec { length: 3, angle: 0.0, thickness: 1.0 }).unwrap();
        assert_eq!(k.size(), 3);
        let third = 1.0 / 3.0;
        for c in 0..3 {
            assert_relative_eq!(k.get(1, c), third, epsilon = 1e-12);
        }
        for c in 0..3 {
            assert_eq!(k.get(0, c), 0.0);
            assert_eq!(k.get(2, c), 0.0);
        }
    }

    #[test]
    fn motion_angle_pi_matches_angle_zero() {
        let a = motion_kernel(&MotionSpec { length: 5, angle: 0.0, thickness: 1.0 }).unwrap();
        let b =
            motion_kernel(&MotionSpec { length: 5, angle: std::f64::consts::PI, thickness: 1.0 })
                .unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn motion_kernels_normalize() {
        for (len, ang, th) in [(3, 0.3, 1.0), (7, 1.1, 1.5), (9, 2.4, 2.0), (5, -0.7, 1.0)] {
            let k = motion_kernel(&MotionSpec { length: len, angle: ang, thickness: th }).unwrap();
            assert_relative_eq!(k.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            assert!(k.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn motion_rejects_short_length() {
        assert!(motion_kernel(&MotionSpec { length: 2, angle: 0.0, thickness: 1.0 }).is_err());
    }

    // ---- SRF perturbation ----

    #[test]
    fn perturb_c_zero_is_sharpened_base_and_rng_free() {
        let base = SrfMatrix::boxcar(2, 6).unwrap();
        let a = perturb_srf(&base, 0.0, &mut Rng::new(1)).unwrap();
        let b = perturb_srf(&base, 0.0, &mut Rng::new(999)).unwrap();
        assert_eq!(a.weights(), b.weights());
        // Direct softmax(kappa * base) with kappa = 6.
        let row = base.row(0);
        let exps: Vec<f64> = row.iter().map(|&v| (6.0 * v).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for i in 0..6 {
            assert_relative_eq!(a.get(0, i), exps[i] / sum, epsilon = 1e-14);
        }
    }

    #[test]
    fn perturb_uniform_row_stays_uniform() {
        let base = SrfMatrix::new(1, 4, vec![0.25; 4]).unwrap();
        let p = perturb_srf(&base, 0.0, &mut Rng::new(3)).unwrap();
        for i in 0..4 {
            assert_relative_eq!(p.get(0, i), 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn perturb_sharpness_matches_scalar_softmax() {
        // base row (1,0,0) at kappa=10: softmax(10,0,0).
        let base = SrfMatrix::new(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let p = perturb_srf_with_sharpness(&base, 0.0, 10.0, &mut Rng::new(0)).unwrap();
        let denom = 10f64.exp() + 2.0;
        assert_relative_eq!(p.get(0, 0), 10f64.exp() / denom, epsilon = 1e-14);
        assert_relative_eq!(p.get(0, 1), 1.0 / denom, epsilon = 1e-14);
    }

    #[test]
    fn perturb_rejects_negative_c() {
        let base = SrfMatrix::boxcar(2, 6).unwrap();
        assert!(perturb_srf(&base, -0.1, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn perturbation_distance_grows_with_c_in_expectation() {
        let base = SrfMatrix::gaussian(4, 16).unwrap();
        let reference = perturb_srf(&base, 0.0, &mut Rng::new(0)).unwrap();
        let tv = |p: &SrfMatrix| -> f64 {
            let mut acc = 0.0;
            for j in 0..p.out_bands() {
                let d: f64 = p
                    .row(j)
                    .iter()
                    .zip(reference.row(j))
                    .map(|(a, b)| (a - b).abs())
                    .sum();
                acc += 0.5 * d;
            }
            acc / p.out_bands() as f64
        };
        let cs = [0.0, 0.05, 0.2, 0.8];
        let mut means = Vec::new();
        for &c in &cs {
            let mut total = 0.0;
            for seed in 0..24u64 {
                let p = perturb_srf(&base, c, &mut Rng::new(seed)).unwrap();
                total += tv(&p);
            }
            means.push(total / 24.0);
        }
        for w in means.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "TV distance not monotone: {means:?}");
        }
    }

    // ---- spatial degradation ----

    #[test]
    fn delta_kernel_scale_one_is_identity() {
        let z = random_cube(3, 6, 6, 10);
        let k = BlurKernel::delta(1).unwrap();
        let x = spatial_degrade(&z, &k, 1).unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn normalized_kernel_preserves_constant() {
        let z = HsiCube::new(2, 8, 8, 0.37).unwrap();
        let k = gaussian_kernel(&GaussianSpec { size: 5, sigma: 1.2 }).unwrap();
        for s in [1, 2, 4] {
            let x = spatial_degrade(&z, &k, s).unwrap();
            for &v in x.data() {
                assert_relative_eq!(v, 0.37, epsilon = 1e-12);
            }
        }
    }

    /// Independent dense-loop oracle for correlate+decimate.
    fn degrade_oracle(z: &HsiCube, k: &BlurKernel, s: usize) -> HsiCube {
        let (bands, h, w) = z.shape();
        let half = (k.size() / 2) as i64;
        let refl = |i: i64, n: usize| -> usize {
            let n = n as i64;
            (if i < 0 { -i - 1 } else if i >= n { 2 * n - 1 - i } else { i }) as usize
        };
        HsiCube::from_fn(bands, h / s, w / s, |b, oi, oj| {
            let mut acc = 0.0;
            for u in 0..k.size() as i64 {
                for v in 0..k.size() as i64 {
                    let r = refl((oi * s + s / 2) as i64 + u - half, h);
                    let c = refl((oj * s + s / 2) as i64 + v - half, w);
                    acc += k.get(u as usize, v as usize) * z.get(b, r, c);
                }
            }
            acc
        })
        .unwrap()
    }

    #[test]
    fn decimation_picks_block_centers() {
        let z = HsiCube::from_fn(1, 4, 4, |_, r, c| (r * 4 + c + 1) as f64).unwrap();
        let k = BlurKernel::delta(1).unwrap();
        let x = spatial_degrade(&z, &k, 2).unwrap();
        assert_eq!(x.data(), &[6.0, 8.0, 14.0, 16.0]);
        assert_eq!(x, degrade_oracle(&z, &k, 2));
    }

    #[test]
    fn degrade_matches_dense_oracle() {
        let z = random_cube(2, 12, 8, 77);
        let k = gaussian_kernel(&GaussianSpec { size: 5, sigma: 0.9 }).unwrap();
        for s in [1, 2, 4] {
            let got = spatial_degrade(&z, &k, s).unwrap();
            let want = degrade_oracle(&z, &k, s);
            let rel = got.sub(&want).unwrap().norm() / want.norm();
            assert!(rel < 1e-13, "s={s} rel={rel}");
        }
    }

    #[test]
    fn degrade_rejects_non_divisible() {
        let z = random_cube(1, 6, 6, 1);
        let k = BlurKernel::delta(3).unwrap();
        assert!(matches!(spatial_degrade(&z, &k, 4), Err(Error::Shape(_))));
    }

    #[test]
    fn operators_are_linear() {
        let mut rng = Rng::new(17);
        let a = HsiCube::from_fn(3, 8, 8, |_, _, _| rng.normal()).unwrap();
        let b = HsiCube::from_fn(3, 8, 8, |_, _, _| rng.normal()).unwrap();
        let k = gaussian_kernel(&GaussianSpec { size: 3, sigma: 0.8 }).unwrap();
        let p = SrfMatrix::boxcar(2, 3).unwrap();
        let comb = a.scale(1.7).unwrap().add(&b.scale(-0.4).unwrap()).unwrap();

        let lhs = spatial_degrade(&comb, &k, 2).unwrap();
        let rhs = spatial_degrade(&a, &k, 2)
            .unwrap()
            .scale(1.7)
            .unwrap()
            .add(&spatial_degrade(&b, &k, 2).unwrap().scale(-0.4).unwrap())
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().norm() / rhs.norm() < 1e-10);

        let lhs = spectral_degrade(&comb, &p).unwrap();
        let rhs = spectral_degrade(&a, &p)
            .unwrap()
            .scale(1.7)
            .unwrap()
            .add(&spectral_degrade(&b, &p).unwrap().scale(-0.4).unwrap())
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().norm() / rhs.norm() < 1e-10);
    }

    // ---- adjoints ----

    #[test]
    fn spatial_adjoint_passes_dot_test() {
        let mut rng = Rng::new(42);
        for trial in 0..100 {
            let bands = 1 + (trial % 3);
            let s = [1, 2, 4][trial % 3];
            let oh = 2 + trial % 3;
            let ow = 2 + (trial / 3) % 3;
            let (h, w) = (oh * s, ow * s);
            let ksize = [1, 3, 5][(trial / 9) % 3];
            if ksize > h.min(w) {
                continue;
            }
            let mut kw: Vec<f64> = (0..ksize * ksize).map(|_| rng.uniform() + 0.01).collect();
            let sum: f64 = kw.iter().sum();
            kw.iter_mut().for_each(|v| *v /= sum);
            let k = BlurKernel::new(ksize, kw).unwrap();

            let u = HsiCube::from_fn(bands, h, w, |_, _, _| rng.normal()).unwrap();
            let v = HsiCube::from_fn(bands, oh, ow, |_, _, _| rng.normal()).unwrap();
            let au = spatial_degrade(&u, &k, s).unwrap();
            let atv = spatial_degrade_adjoint(&v, &k, s, (h, w)).unwrap();
            let lhs = au.dot(&v).unwrap();
            let rhs = u.dot(&atv).unwrap();
            let rel = (lhs - rhs).abs() / lhs.abs().max(1e-12);
            assert!(rel < 1e-10, "trial {trial}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn spatial_adjoint_delta_is_identity_and_zero_maps_to_zero() {
        let x = random_cube(2, 5, 5, 3);
        let k = BlurKernel::delta(1).unwrap();
        let back = spatial_degrade_adjoint(&x, &k, 1, (5, 5)).unwrap();
        assert_eq!(back, x);
        let z = HsiCube::new(2, 3, 3, 0.0).unwrap();
        let back = spatial_degrade_adjoint(&z, &k, 2, (6, 6)).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectral_adjoint_passes_dot_test() {
        let mut rng = Rng::new(43);
        for trial in 0..100 {
            let in_bands = 2 + trial % 6;
            let out_bands = 1 + trial % in_bands.min(3);
            let h = 2 + trial % 4;
            let w = 2 + (trial / 2) % 4;
            let mut weights = vec![0.0; out_bands * in_bands];
            for j in 0..out_bands {
                let mut sum = 0.0;
                for i in 0..in_bands {
                    let v = rng.uniform() + 0.01;
                    weights[j * in_bands + i] = v;
                    sum += v;
                }
                for i in 0..in_bands {
                    weights[j * in_bands + i] /= sum;
                }
            }
            let p = SrfMatrix::new(out_bands, in_bands, weights).unwrap();
            let u = HsiCube::from_fn(in_bands, h, w, |_, _, _| rng.normal()).unwrap();
            let v = HsiCube::from_fn(out_bands, h, w, |_, _, _| rng.normal()).unwrap();
            let lhs = spectral_degrade(&u, &p).unwrap().dot(&v).unwrap();
            let rhs = u.dot(&spectral_degrade_adjoint(&v, &p).unwrap()).unwrap();
            let rel = (lhs - rhs).abs() / lhs.abs().max(1e-12);
            assert!(rel < 1e-10, "trial {trial}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn spectral_identity_and_mean_rows() {
        let z = random_cube(3, 4, 4, 8);
        let id = SrfMatrix::identity(3).unwrap();
        assert_eq!(spectral_degrade(&z, &id).unwrap(), z);
        assert_eq!(spectral_degrade_adjoint(&z, &id).unwrap(), z);

        let mean_row = SrfMatrix::new(1, 3, vec![1.0 / 3.0; 3]).unwrap();
        let y = spectral_degrade(&z, &mean_row).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let m = (z.get(0, r, c) + z.get(1, r, c) + z.get(2, r, c)) / 3.0;
                assert_relative_eq!(y.get(0, r, c), m, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn spectral_hand_dot_product() {
        let z = HsiCube::from_vec(3, 1, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let p = SrfMatrix::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        let y = spectral_degrade(&z, &p).unwrap();
        assert_relative_eq!(y.get(0, 0, 0), 2.3, epsilon = 1e-14);
    }

    #[test]
    fn spectral_rejects_band_mismatch() {
        let z = random_cube(3, 4, 4, 8);
        let p = SrfMatrix::boxcar(2, 4).unwrap();
        assert!(matches!(spectral_degrade(&z, &p), Err(Error::Shape(_))));
    }

    // ---- noise ----

    #[test]
    fn infinite_snr_is_identity() {
        let x = random_cube(2, 4, 4, 5);
        let out = add_awgn(&x, f64::INFINITY, &mut Rng::new(1)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn noise_variance_matches_40db_request() {
        // Unit-power signal: all ones. 40 dB -> variance 1e-4.
        let x = HsiCube::new(10, 100, 100, 1.0).unwrap();
        let out = add_awgn(&x, 40.0, &mut Rng::new(7)).unwrap();
        let noise = out.sub(&x).unwrap();
        let var = noise.mean_sq();
        assert!((var - 1e-4).abs() < 2e-6, "empirical variance {var}");
    }

    #[test]
    fn same_seed_same_noise() {
        let x = random_cube(2, 8, 8, 5);
        let a = add_awgn(&x, 30.0, &mut Rng::new(11)).unwrap();
        let b = add_awgn(&x, 30.0, &mut Rng::new(11)).unwrap();
        assert_eq!(a, b);
    }

    // ---- simulate_pair ----

    #[test]
    fn degenerate_pipeline_returns_input() {
        let z = random_cube(3, 6, 6, 21);
        let cfg = DegenerationConfig {
            scale: 1,
            kernel_spec: KernelSpec::Explicit(BlurKernel::delta(1).unwrap()),
            srf_base: SrfMatrix::identity(3).unwrap(),
            srf_perturb_c: 0.0,
            snr_hsi_db: f64::INFINITY,
            snr_msi_db: f64::INFINITY,
        };
        let pair = simulate_pair(&z, &cfg, &Rng::new(1)).unwrap();
        assert_eq!(pair.lr_hsi, z);
        // The identity SRF passes through a sharpened softmax, so Y is a
        // band-mixed but near-identity view of z.
        assert_eq!(pair.hr_msi.shape(), z.shape());
        let rel = pair.hr_msi.sub(&z).unwrap().norm() / z.norm();
        assert!(rel < 0.6, "softmaxed identity drifted too far: {rel}");
    }

    #[test]
    fn table_protocol_shapes_and_snr() {
        // SR scale 8 with 40 dB on both observations.
        let z = random_cube(8, 32, 32, 33);
        let cfg = DegenerationConfig {
            scale: 8,
            kernel_spec: KernelSpec::Motion(MotionSpec { length: 7, angle: 0.6, thickness: 1.0 }),
            srf_base: SrfMatrix::boxcar(3, 8).unwrap(),
            srf_perturb_c: 0.02,
            snr_hsi_db: 40.0,
            snr_msi_db: 40.0,
        };
        let pair = simulate_pair(&z, &cfg, &Rng::new(2)).unwrap();
        assert_eq!(pair.lr_hsi.shape(), (8, 4, 4));
        assert_eq!(pair.hr_msi.shape(), (3, 32, 32));
        // Empirical SNR of the MSI (large enough to estimate): within 1.5 dB.
        let clean = spectral_degrade(&z, &pair.srf_true).unwrap();
        let noise = pair.hr_msi.sub(&clean).unwrap();
        let snr = 10.0 * (clean.mean_sq() / noise.mean_sq()).log10();
        assert!((snr - 40.0).abs() < 1.5, "MSI SNR {snr}");
    }

    #[test]
    fn simulate_pair_is_deterministic() {
        let z = random_cube(4, 8, 8, 9);
        let cfg = DegenerationConfig {
            scale: 2,
            kernel_spec: KernelSpec::Gaussian(GaussianSpec { size: 5, sigma: 1.0 }),
            srf_base: SrfMatrix::boxcar(2, 4).unwrap(),
            srf_perturb_c: 0.01,
            snr_hsi_db: 35.0,
            snr_msi_db: 35.0,
        };
        let a = simulate_pair(&z, &cfg, &Rng::new(123)).unwrap();
        let b = simulate_pair(&z, &cfg, &Rng::new(123)).unwrap();
        assert_eq!(a.lr_hsi, b.lr_hsi);
        assert_eq!(a.hr_msi, b.hr_msi);
        assert_eq!(a.srf_true.weights(), b.srf_true.weights());
    }
}
