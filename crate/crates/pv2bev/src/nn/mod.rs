//! Minimal differentiable-layer stack with manual backpropagation.
//!
//! Tensors are dense `f64` arrays; layers process one example at a time and
//! accumulate parameter gradients across calls, so a mini-batch is a loop of
//! `forward`/`backward` pairs followed by one optimizer step. Every layer
//! also offers a cache-free `infer` path for prediction, and `forward` is
//! defined as `infer` plus caching so the two can never drift apart.

mod adam;
mod gradcheck;
mod layers;

pub use adam::AdamState;
pub use gradcheck::{grad_check, max_rel_error_central};
pub use layers::{Conv2d, Dense, Flatten, GlobalAvgPool, InitKind, Relu};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        got: String,
    },
    #[error("{0}: backward called before forward")]
    NoForwardCache(String),
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("optimizer mismatch: {0}")]
    OptimizerMismatch(String),
}

/// Dense n-dimensional array of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::InvalidTensor(format!(
                "shape {shape:?} implies {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
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

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    pub(crate) fn reshaped(&self, shape: &[usize]) -> Result<Tensor, NnError> {
        Tensor::from_vec(shape, self.data.clone())
    }
}

/// Shape-level description of a layer, used for checkpoints and topology checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    Concat { left: usize, right: usize },
}

/// One differentiable layer operating on a single example.
pub trait Layer {
    fn spec(&self) -> LayerSpec;

    /// Cache-free evaluation.
    fn infer(&self, input: &Tensor) -> Result<Tensor, NnError>;

    /// Evaluation that caches whatever `backward` will need.
    fn forward(&mut self, input: &Tensor) -> Result<Tensor, NnError>;

    /// Reverse-mode step: accumulates parameter gradients and returns the
    /// gradient with respect to the layer input.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError>;

    fn params(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn grads(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn zero_grads(&mut self) {}

    /// Smallest `|pre-activation|` seen by the most recent forward, for
    /// layers with a kink (ReLU). Used to dodge subgradient ambiguity in
    /// gradient checks.
    fn min_abs_preactivation(&self) -> Option<f64> {
        None
    }
}

/// A straight chain of layers.
#[derive(Default)]
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Box<dyn Layer>) {
        self.layers.push(layer);
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn infer(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn grads(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.grads()).collect()
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grads();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Minimum `|pre-activation|` over all kinked layers in the last forward.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(|l| l.min_abs_preactivation())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Mean squared error over all elements, with its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    if pred.shape() != target.shape() {
        return Err(NnError::ShapeMismatch {
            layer: "mse_loss".into(),
            expected: format!("{:?}", target.shape()),
            got: format!("{:?}", pred.shape()),
        });
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0;
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

/// Joins two rank-1 tensors end to end.
pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    if a.shape().len() != 1 || b.shape().len() != 1 {
        return Err(NnError::InvalidTensor(
            "concat expects rank-1 tensors".into(),
        ));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Ok(Tensor::vector(data))
}

/// Splits a concat gradient back into its two halves.
pub fn split_grad(g: &Tensor, left_len: usize) -> Result<(Tensor, Tensor), NnError> {
    if g.shape().len() != 1 || g.len() < left_len {
        return Err(NnError::InvalidTensor(format!(
            "cannot split length-{} gradient at {left_len}",
            g.len()
        )));
    }
    let left = Tensor::vector(g.data()[..left_len].to_vec());
    let right = Tensor::vector(g.data()[left_len..].to_vec());
    Ok((left, right))
}

// Row-major matrix kernels shared by the conv and dense layers.
// All three accumulate into `c`.

/// `c[m][n] += a[m][k] * b[k][n]`
pub(crate) fn matmul_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for mi in 0..m {
        let crow = &mut c[mi * n..(mi + 1) * n];
        for ki in 0..k {
            let av = a[mi * k + ki];
            if av == 0.0 {
                continue;
            }
            let brow = &b[ki * n..(ki + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m][n] += sum_p a[m][p] * b[n][p]` (i.e. `A * B^T`)
pub(crate) fn matmul_abt(c: &mut [f64], a: &[f64], b: &[f64], m: usize, n: usize, p: usize) {
    debug_assert_eq!(a.len(), m * p);
    debug_assert_eq!(b.len(), n * p);
    debug_assert_eq!(c.len(), m * n);
    for mi in 0..m {
        let arow = &a[mi * p..(mi + 1) * p];
        for ni in 0..n {
            let brow = &b[ni * p..(ni + 1) * p];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            c[mi * n + ni] += acc;
        }
    }
}

/// `c[k][n] += sum_m a[m][k] * b[m][n]` (i.e. `A^T * B`)
pub(crate) fn matmul_atb(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for mi in 0..m {
        let brow = &b[mi * n..(mi + 1) * n];
        for ki in 0..k {
            let av = a[mi * k + ki];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[ki * n..(ki + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}
