use super::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// Running averages kept by Adadelta for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    shape: Vec<usize>,
    sq_grad: Vec<f64>,
    sq_update: Vec<f64>,
    rho: f64,
    eps: f64,
}

impl AdadeltaState {
    pub fn new(shape: &[usize], rho: f64, eps: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Config(format!("adadelta rho must be in (0,1), got {rho}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("adadelta eps must be positive, got {eps}")));
        }
        let n = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            sq_grad: vec![0.0; n],
            sq_update: vec![0.0; n],
            rho,
            eps,
        })
    }

    pub fn for_param(param: &Tensor, rho: f64, eps: f64) -> Result<Self> {
        Self::new(param.shape(), rho, eps)
    }

    /// Running mean of squared gradients.
    pub fn sq_grad(&self) -> &[f64] {
        &self.sq_grad
    }

    /// Running mean of squared updates.
    pub fn sq_update(&self) -> &[f64] {
        &self.sq_update
    }

    /// Applies one update from `param`'s gradient, then zeroes the gradient.
    /// A tensor without a gradient buffer is treated as having zero gradient.
    pub fn step(&mut self, param: &mut Tensor) -> Result<()> {
        if param.shape() != self.shape.as_slice() {
            return Err(Error::dim("adadelta_step", param.shape(), &self.shape));
        }
        let (rho, eps) = (self.rho, self.eps);
        let Tensor { data, grad, .. } = param;
        match grad {
            Some(grad) => {
                for i in 0..data.len() {
                    let g = grad[i];
                    self.sq_grad[i] = rho * self.sq_grad[i] + (1.0 - rho) * g * g;
                    let delta =
                        -((self.sq_update[i] + eps).sqrt() / (self.sq_grad[i] + eps).sqrt()) * g;
                    self.sq_update[i] = rho * self.sq_update[i] + (1.0 - rho) * delta * delta;
                    data[i] += delta;
                    grad[i] = 0.0;
                }
            }
            None => {
                for i in 0..data.len() {
                    self.sq_grad[i] *= rho;
                    self.sq_update[i] *= rho;
                }
            }
        }
        Ok(())
    }
}
