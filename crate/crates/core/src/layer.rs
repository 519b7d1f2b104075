//! Fully-connected layers with hand-chained reverse-mode gradients.
//!
//! A layer computes `y = activation(x · Wᵀ + b)` for a batch `x` of shape
//! `batch × in`. `forward` caches the input and pre-activation so that a
//! later `backward` can accumulate parameter gradients; `infer` computes the
//! same output without touching any state.
//!
//! Gradients accumulate across `backward` calls until `zero_grad` is called.
//! Nothing is reset implicitly on forward.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Parameters;
use crate::tensor::{gemm, Op, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Cache {
    input: Tensor2,
    preactivation: Tensor2,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    weights: Tensor2,
    bias: Vec<f64>,
    activation: Activation,
    grad_weights: Tensor2,
    grad_bias: Vec<f64>,
    cache: Option<Cache>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Spec(format!("layer dims must be positive, got {in_dim}->{out_dim}")));
        }
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive Glorot limit");
        let data = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        let weights = Tensor2::from_vec(out_dim, in_dim, data)?;
        Self::from_parts(weights, vec![0.0; out_dim], activation)
    }

    pub fn from_parts(weights: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Dimension(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        let (out_dim, in_dim) = weights.shape();
        Ok(Self {
            grad_weights: Tensor2::zeros(out_dim, in_dim),
            grad_bias: vec![0.0; out_dim],
            weights,
            bias,
            activation,
            cache: None,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Tensor2 {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor2 {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn grad_weights(&self) -> &Tensor2 {
        &self.grad_weights
    }

    pub fn grad_bias(&self) -> &[f64] {
        &self.grad_bias
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn preactivate(&self, input: &Tensor2) -> Result<Tensor2> {
        if input.cols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "layer expects {} inputs, got batch of shape {}x{}",
                self.in_dim(),
                input.rows(),
                input.cols()
            )));
        }
        let mut z = Tensor2::zeros(input.rows(), self.out_dim());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(1.0, input, Op::N, &self.weights, Op::T, 1.0, &mut z)?;
        Ok(z)
    }

    fn activate(&self, z: &Tensor2) -> Tensor2 {
        let mut y = z.clone();
        if self.activation != Activation::Identity {
            for v in y.as_mut_slice() {
                *v = self.activation.apply(*v);
            }
        }
        y
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2> {
        let z = self.preactivate(input)?;
        let y = self.activate(&z);
        self.cache = Some(Cache {
            input: input.clone(),
            preactivation: z,
        });
        Ok(y)
    }

    /// Forward pass without caching.
    pub fn infer(&self, input: &Tensor2) -> Result<Tensor2> {
        let z = self.preactivate(input)?;
        Ok(self.activate(&z))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the layer input.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Tensor2> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("layer backward called before forward".into()))?;
        if upstream.shape() != cache.preactivation.shape() {
            return Err(Error::Dimension(format!(
                "upstream gradient {}x{} does not match layer output {}x{}",
                upstream.rows(),
                upstream.cols(),
                cache.preactivation.rows(),
                cache.preactivation.cols()
            )));
        }
        let mut delta = upstream.clone();
        if self.activation != Activation::Identity {
            for (d, &z) in delta.as_mut_slice().iter_mut().zip(cache.preactivation.as_slice()) {
                *d *= self.activation.derivative(z);
            }
        }
        gemm(1.0, &delta, Op::T, &cache.input, Op::N, 1.0, &mut self.grad_weights)?;
        for r in 0..delta.rows() {
            for (g, d) in self.grad_bias.iter_mut().zip(delta.row(r)) {
                *g += d;
            }
        }
        let mut grad_input = Tensor2::zeros(delta.rows(), self.in_dim());
        gemm(1.0, &delta, Op::N, &self.weights, Op::N, 0.0, &mut grad_input)?;
        Ok(grad_input)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parameters for DenseLayer {
    fn visit_parameters(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(self.weights.as_mut_slice(), self.grad_weights.as_mut_slice());
        f(&mut self.bias, &mut self.grad_bias);
    }
}
