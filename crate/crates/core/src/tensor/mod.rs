//! Dense `f64` tensors, a reverse-mode tape over them, and the Adadelta
//! optimizer.
//!
//! Everything here works in 64-bit floats. Parameters are plain [`Tensor`]s
//! carrying a gradient buffer; a [`Tape`] records one forward pass over
//! copies of those parameters and hands the accumulated gradients back
//! through [`Gradients`].

mod adadelta;
pub mod kernels;
mod rng;
mod tape;

pub use adadelta::{AdadeltaState, DEFAULT_EPS, DEFAULT_RHO};
pub use rng::SeededRng;
pub use tape::{Activation, Gradients, Tape, Var, BCE_CLAMP};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the uniform distribution used to initialize parameters.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
        }
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|x| *x = value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform(shape: &[usize], scale: f64, rng: &mut SeededRng) -> Self {
        let mut t = Self::zeros(shape);
        for x in &mut t.data {
            *x = rng.uniform(-scale, scale);
        }
        t
    }

    /// Marks the tensor as trainable by attaching a zeroed gradient buffer.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![0.0; self.data.len()]);
        self
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Adds `delta` into the gradient buffer, creating it if needed.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::dim("accumulate_grad", &self.shape, &[delta.len()]));
        }
        let n = self.data.len();
        let g = self.grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, d) in g.iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    /// Adds `delta` into row `row` of a 2-D tensor's gradient.
    pub fn accumulate_row_grad(&mut self, row: usize, delta: &[f64]) -> Result<()> {
        let cols = self.row_len()?;
        if delta.len() != cols || row >= self.shape[0] {
            return Err(Error::dim(
                "accumulate_row_grad",
                &self.shape,
                &[row, delta.len()],
            ));
        }
        let n = self.data.len();
        let g = self.grad.get_or_insert_with(|| vec![0.0; n]);
        for (g, d) in g[row * cols..(row + 1) * cols].iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    fn row_len(&self) -> Result<usize> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!(
                "expected a matrix, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.shape[1])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1..].iter().product::<usize>();
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let cols = self.shape[1..].iter().product::<usize>();
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Bitwise comparison of shape and values, ignoring gradients.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
