use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::{NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// `outputs × inputs`
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self { w: Tensor::zeros(&[output, input]), b: Tensor::zeros(&[output]), activation }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        Self { w: Tensor::scaled_uniform(&[output, input], rng), b: Tensor::zeros(&[output]), activation }
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }

    pub fn output(&self) -> usize {
        self.w.rows()
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

pub(crate) struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

pub(crate) fn forward_cached(x: &[f64], p: &DenseParams) -> (Vec<f64>, DenseCache) {
    let mut pre = vec![0.0; p.output()];
    p.w.matvec_into(x, &mut pre);
    pre.iter_mut().zip(&p.b.values).for_each(|(v, b)| *v += b);
    let out = pre.iter().map(|&v| p.activation.apply(v)).collect();
    (out, DenseCache { input: x.to_vec(), pre })
}

pub(crate) fn backward(p: &DenseParams, cache: &DenseCache, d_out: &[f64], grads: &mut DenseParams) -> Vec<f64> {
    let d_pre: Vec<f64> = d_out.iter().zip(&cache.pre).map(|(d, &pre)| d * p.activation.derivative(pre)).collect();
    grads.w.outer_acc(&d_pre, &cache.input);
    grads.b.values.iter_mut().zip(&d_pre).for_each(|(g, d)| *g += d);
    let mut d_in = vec![0.0; p.input()];
    p.w.matvec_t_acc(&d_pre, &mut d_in);
    d_in
}

/// `activation(W·x + b)`
pub fn dense_forward(x: &[f64], w: &Tensor, b: &Tensor, activation: Activation) -> Result<Vec<f64>> {
    if w.shape.len() != 2 || w.cols() != x.len() || b.shape != [w.rows()] {
        return Err(NeuralError::Shape(format!(
            "dense layer W{:?}, b{:?} cannot take input of length {}",
            w.shape,
            b.shape,
            x.len()
        )));
    }
    let p = DenseParams { w: w.clone(), b: b.clone(), activation };
    Ok(forward_cached(x, &p).0)
}
