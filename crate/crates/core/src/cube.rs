//! Dense hyperspectral cubes, blur kernels, and spectral response matrices.
//!
//! [`HsiCube`] stores a band-major `(band, row, col)` tensor of finite `f64`
//! values, so each band is one contiguous 2-D image and per-band spatial
//! operators walk contiguous memory. All types here are immutable values
//! after construction; operators return fresh cubes.

use crate::error::{Error, Result};

/// Dense 3-D tensor of shape `(bands, height, width)` in band-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    bands: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    /// Declared nominal value range; metrics assume `[0, 1]`.
    pub value_range: (f64, f64),
}

impl HsiCube {
    /// Cube of the given shape with every element equal to `fill`.
    pub fn new(bands: usize, height: usize, width: usize, fill: f64) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "cube dimensions must be >= 1, got {bands}x{height}x{width}"
            )));
        }
        if !fill.is_finite() {
            return Err(Error::NonFinite(format!("fill value {fill}")));
        }
        Ok(HsiCube {
            bands,
            height,
            width,
            data: vec![fill; bands * height * width],
            value_range: (0.0, 1.0),
        })
    }

    /// Cube from a band-major buffer. Rejects length mismatches and
    /// non-finite elements.
    pub fn from_vec(bands: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if bands == 0 || height == 0 || width == 0 {
            return Err(Error::shape(format!(
                "cube dimensions must be >= 1, got {bands}x{height}x{width}"
            )));
        }
        if data.len() != bands * height * width {
            return Err(Error::shape(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                bands,
                height,
                width
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cube element {bad}")));
        }
        Ok(HsiCube { bands, height, width, data, value_range: (0.0, 1.0) })
    }

    /// Cube whose element at `(band, row, col)` is `f(band, row, col)`.
    pub fn from_fn(
        bands: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(bands * height * width);
        for b in 0..bands {
            for r in 0..height {
                for c in 0..width {
                    data.push(f(b, r, c));
                }
            }
        }
        HsiCube::from_vec(bands, height, width, data)
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.bands, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[(band * self.height + row) * self.width + col]
    }

    /// Contiguous slice of one band's `height x width` image.
    pub fn band(&self, band: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[band * n..(band + 1) * n]
    }

    /// Spectrum at one pixel, gathered across bands.
    pub fn pixel_spectrum(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.bands).map(|b| self.get(b, row, col)).collect()
    }

    /// New cube with `f` applied elementwise. The value range carries over.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        let mut out = HsiCube::from_vec(self.bands, self.height, self.width, data)?;
        out.value_range = self.value_range;
        Ok(out)
    }

    /// Elementwise combination of two same-shape cubes.
    pub fn zip_map(&self, other: &HsiCube, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data: Vec<f64> =
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        let mut out = HsiCube::from_vec(self.bands, self.height, self.width, data)?;
        out.value_range = self.value_range;
        Ok(out)
    }

    pub fn add(&self, other: &HsiCube) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &HsiCube) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        self.map(|v| v * factor)
    }

    /// Inner product over all elements.
    pub fn dot(&self, other: &HsiCube) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Mean of squared elements (the signal-power convention used by the
    /// SNR-calibrated noise model).
    pub fn mean_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    /// Frobenius norm over all elements.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    /// Rectangular crop: bands kept, rows `r0..r0+h`, cols `c0..c0+w`.
    pub fn crop(&self, r0: usize, c0: usize, h: usize, w: usize) -> Result<Self> {
        if r0 + h > self.height || c0 + w > self.width {
            return Err(Error::shape(format!(
                "crop {}x{} at ({},{}) exceeds {}x{}",
                h, w, r0, c0, self.height, self.width
            )));
        }
        let mut out = HsiCube::new(self.bands, h, w, 0.0)?;
        for b in 0..self.bands {
            for r in 0..h {
                for c in 0..w {
                    let v = self.get(b, r0 + r, c0 + c);
                    out.data[(b * h + r) * w + c] = v;
                }
            }
        }
        out.value_range = self.value_range;
        Ok(out)
    }

    pub(crate) fn check_same_shape(&self, other: &HsiCube) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Escape hatch for operators that build the buffer in place and
    /// guarantee finiteness themselves.
    pub(crate) fn from_raw_unchecked(
        bands: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), bands * height * width);
        HsiCube { bands, height, width, data, value_range: (0.0, 1.0) }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Square 2-D blur kernel: odd size, nonnegative, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    size: usize,
    weights: Vec<f64>,
}

/// Tolerance on the sum-to-one invariant of kernels and SRF rows.
pub const NORMALIZATION_TOL: f64 = 1e-9;

impl BlurKernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd and >= 1, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::shape(format!(
                "kernel weight count {} != {size}x{size}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("kernel weight".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::param("kernel weights must be nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::param(format!("kernel weights sum to {sum}, expected 1")));
        }
        Ok(BlurKernel { size, weights })
    }

    /// Identity kernel: a single 1 at the center of an odd canvas.
    pub fn delta(size: usize) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::param(format!("kernel size must be odd and >= 1, got {size}")));
        }
        let mut weights = vec![0.0; size * size];
        weights[(size / 2) * size + size / 2] = 1.0;
        Ok(BlurKernel { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    /// Relative L2 distance to another kernel of the same size.
    pub fn relative_error(&self, other: &BlurKernel) -> Result<f64> {
        if self.size != other.size {
            return Err(Error::shape(format!(
                "kernel size mismatch: {} vs {}",
                self.size, other.size
            )));
        }
        let diff: f64 = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = other.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        Ok(diff / norm.max(1e-300))
    }

    /// Zero-pad to a larger odd canvas, keeping the center aligned. Used to
    /// compare kernels of different declared supports.
    pub fn embed(&self, size: usize) -> Result<Self> {
        if size < self.size || size % 2 == 0 {
            return Err(Error::param(format!(
                "target size {size} must be odd and >= {}",
                self.size
            )));
        }
        let off = (size - self.size) / 2;
        let mut weights = vec![0.0; size * size];
        for r in 0..self.size {
            for c in 0..self.size {
                weights[(r + off) * size + (c + off)] = self.get(r, c);
            }
        }
        Ok(BlurKernel { size, weights })
    }
}

/// Row-stochastic spectral response matrix mapping `in_bands` hyperspectral
/// bands onto `out_bands` multispectral bands.
///
/// The constructor accepts `out_bands == in_bands` (the identity response is
/// a useful degenerate configuration in tests and pipelines) even though real
/// sensors always have `out_bands < in_bands`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfMatrix {
    out_bands: usize,
    in_bands: usize,
    weights: Vec<f64>,
}

impl SrfMatrix {
    pub fn new(out_bands: usize, in_bands: usize, weights: Vec<f64>) -> Result<Self> {
        if out_bands == 0 || in_bands == 0 {
            return Err(Error::shape("SRF dimensions must be >= 1"));
        }
        if out_bands > in_bands {
            return Err(Error::shape(format!(
                "SRF output bands {out_bands} exceed input bands {in_bands}"
            )));
        }
        if weights.len() != out_bands * in_bands {
            return Err(Error::shape(format!(
                "SRF weight count {} != {out_bands}x{in_bands}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("SRF weight".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::param("SRF weights must be nonnegative"));
        }
        for j in 0..out_bands {
            let sum: f64 = weights[j * in_bands..(j + 1) * in_bands].iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::param(format!("SRF row {j} sums to {sum}, expected 1")));
            }
        }
        Ok(SrfMatrix { out_bands, in_bands, weights })
    }

    /// Identity response (`out_bands == in_bands`).
    pub fn identity(bands: usize) -> Result<Self> {
        let mut weights = vec![0.0; bands * bands];
        for i in 0..bands {
            weights[i * bands + i] = 1.0;
        }
        SrfMatrix::new(bands, bands, weights)
    }

    /// Boxcar response: each output band averages one contiguous block of
    /// input bands, blocks as even as possible.
    pub fn boxcar(out_bands: usize, in_bands: usize) -> Result<Self> {
        if out_bands == 0 || out_bands > in_bands {
            return Err(Error::shape(format!(
                "boxcar SRF needs 1 <= out_bands <= in_bands, got {out_bands}/{in_bands}"
            )));
        }
        let mut weights = vec![0.0; out_bands * in_bands];
        for j in 0..out_bands {
            let lo = j * in_bands / out_bands;
            let hi = (j + 1) * in_bands / out_bands;
            let w = 1.0 / (hi - lo) as f64;
            for i in lo..hi {
                weights[j * in_bands + i] = w;
            }
        }
        SrfMatrix::new(out_bands, in_bands, weights)
    }

    /// Smooth overlapping response: Gaussian lobes centered evenly across the
    /// input bands, each row normalized. Closer to a camera response than
    /// [`SrfMatrix::boxcar`].
    pub fn gaussian(out_bands: usize, in_bands: usize) -> Result<Self> {
        if out_bands == 0 || out_bands > in_bands {
            return Err(Error::shape(format!(
                "gaussian SRF needs 1 <= out_bands <= in_bands, got {out_bands}/{in_bands}"
            )));
        }
        let sigma = in_bands as f64 / (2.0 * out_bands as f64);
        let mut weights = vec![0.0; out_bands * in_bands];
        for j in 0..out_bands {
            let center = (j as f64 + 0.5) * in_bands as f64 / out_bands as f64 - 0.5;
            let row = &mut weights[j * in_bands..(j + 1) * in_bands];
            for (i, w) in row.iter_mut().enumerate() {
                let d = i as f64 - center;
                *w = (-0.5 * (d / sigma).powi(2)).exp();
            }
            let sum: f64 = row.iter().sum();
            for w in row.iter_mut() {
                *w /= sum;
            }
        }
        SrfMatrix::new(out_bands, in_bands, weights)
    }

    pub fn out_bands(&self) -> usize {
        self.out_bands
    }

    pub fn in_bands(&self) -> usize {
        self.in_bands
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.in_bands..(j + 1) * self.in_bands]
    }

    #[inline]
    pub fn get(&self, out_band: usize, in_band: usize) -> f64 {
        self.weights[out_band * self.in_bands + in_band]
    }

    /// Relative Frobenius distance to another SRF of the same shape.
    pub fn relative_error(&self, other: &SrfMatrix) -> Result<f64> {
        if self.out_bands != other.out_bands || self.in_bands != other.in_bands {
            return Err(Error::shape("SRF shape mismatch"));
        }
        let diff: f64 = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = other.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        Ok(diff / norm.max(1e-300))
    }
}
