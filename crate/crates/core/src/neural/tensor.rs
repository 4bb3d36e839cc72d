use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NeuralError, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), values: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(NeuralError::Shape(format!("shape {shape:?} needs {expected} values, got {}", values.len())));
        }
        Ok(Self { shape: shape.to_vec(), values })
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` where fan_in is the
    /// last dimension.
    pub fn scaled_uniform<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let fan_in = *shape.last().unwrap_or(&1) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), values: (0..n).map(|_| rng.random_range(-bound..=bound)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|x| *x *= s);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(NeuralError::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_finite(&self, name: &str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(NeuralError::Numeric(format!("{name} contains non-finite values")))
        }
    }

    /// `out = self · x` for a 2-D tensor.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        let c = self.cols();
        debug_assert_eq!(x.len(), c);
        for (o, row) in out.iter_mut().zip(self.values.chunks_exact(c)) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    /// `out += selfᵀ · y` for a 2-D tensor.
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        let c = self.cols();
        for (&yi, row) in y.iter().zip(self.values.chunks_exact(c)) {
            if yi != 0.0 {
                out.iter_mut().zip(row).for_each(|(o, w)| *o += yi * w);
            }
        }
    }

    /// `self += y ⊗ x` for a 2-D tensor.
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        let c = self.cols();
        for (&yi, row) in y.iter().zip(self.values.chunks_exact_mut(c)) {
            if yi != 0.0 {
                row.iter_mut().zip(x).for_each(|(w, v)| *w += yi * v);
            }
        }
    }
}
