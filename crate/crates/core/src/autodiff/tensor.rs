//! Dense row-major tensor used by the autodiff engine.

use crate::cube::HsiCube;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense tensor of `f64` values. Rank-1 vectors, `(out, in)` matrices,
/// `(channels, height, width)` activations, and conv weights
/// `(out_c, in_c, kh, kw)` all share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::shape(format!(
                "tensor data length {} != product of shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Standard normal entries; used only in tests and probes.
    pub fn randn(shape: &[usize], rng: &mut Rng) -> Self {
        let mut t = Tensor::zeros(shape);
        rng.fill_normal(&mut t.data);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// View a cube as a `(bands, height, width)` activation tensor.
    pub fn from_cube(cube: &HsiCube) -> Self {
        let (b, h, w) = cube.shape();
        Tensor { shape: vec![b, h, w], data: cube.data().to_vec() }
    }

    /// Interpret a rank-3 tensor as a cube. Fails on non-finite values.
    pub fn to_cube(&self) -> Result<HsiCube> {
        if self.shape.len() != 3 {
            return Err(Error::shape(format!(
                "expected rank-3 tensor for cube conversion, got {:?}",
                self.shape
            )));
        }
        HsiCube::from_vec(self.shape[0], self.shape[1], self.shape[2], self.data.clone())
    }
}
