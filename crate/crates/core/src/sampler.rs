//! Random input functions on `[0, 1]`.
//!
//! Two families are provided: a clamped Gaussian random field with an RBF
//! kernel (used for the coefficient-generating function `u`) and a truncated
//! random Fourier series that is exactly 1-periodic (used for the initial
//! condition `v`, which must satisfy the periodic boundary condition).

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// `m` equally spaced points `x_j = j / (m - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    locations: Vec<f64>,
}

impl SensorGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Parameter(format!("sensor grid needs at least 2 points, got {m}")));
        }
        let last = (m - 1) as f64;
        let locations = (0..m).map(|j| j as f64 / last).collect();
        Ok(Self { locations })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// Stride such that every `stride`-th point of `dense` is a point of this
    /// grid.
    pub fn stride_within(&self, dense: &SensorGrid) -> Result<usize> {
        let (coarse, fine) = (self.len() - 1, dense.len() - 1);
        if fine % coarse != 0 {
            return Err(Error::Parameter(format!(
                "{} sensors are not a subsampling of a {}-point grid",
                self.len(),
                dense.len()
            )));
        }
        Ok(fine / coarse)
    }
}

/// One input function evaluated at the sensors, optionally together with a
/// finer evaluation for the PDE solver.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    pub values: Vec<f64>,
    pub dense_values: Option<Vec<f64>>,
}

impl FunctionSample {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            dense_values: None,
        }
    }

    /// Keeps `dense` and takes every `stride`-th value as the sensor values.
    pub fn from_dense(dense: Vec<f64>, stride: usize) -> Self {
        let values = dense.iter().step_by(stride.max(1)).copied().collect();
        Self {
            values,
            dense_values: Some(dense),
        }
    }

    /// Values on the finest grid available.
    pub fn finest(&self) -> &[f64] {
        self.dense_values.as_deref().unwrap_or(&self.values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrfSpec {
    pub length_scale: f64,
    pub variance: f64,
    /// Added to the diagonal of the correlation matrix before factoring.
    pub jitter: f64,
}

impl Default for GrfSpec {
    fn default() -> Self {
        Self {
            length_scale: 0.2,
            variance: 1.0,
            jitter: 1e-10,
        }
    }
}

impl GrfSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::Parameter(format!("length_scale must be > 0, got {}", self.length_scale)));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::Parameter(format!("variance must be > 0, got {}", self.variance)));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Parameter(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        Ok(())
    }

    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.variance * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Cholesky factor of the RBF correlation matrix on a fixed grid, reusable
/// across draws.
#[derive(Debug, Clone)]
pub struct GrfSampler {
    n: usize,
    std_dev: f64,
    /// Row-major lower-triangular factor.
    factor: Vec<f64>,
}

impl GrfSampler {
    pub fn new(spec: &GrfSpec, grid: &SensorGrid) -> Result<Self> {
        spec.validate()?;
        let x = grid.locations();
        let n = x.len();
        let ell2 = spec.length_scale * spec.length_scale;
        let corr = DMatrix::from_fn(n, n, |i, j| {
            let d = x[i] - x[j];
            let k = (-d * d / (2.0 * ell2)).exp();
            if i == j {
                k + spec.jitter
            } else {
                k
            }
        });
        let chol = corr.cholesky().ok_or_else(|| {
            Error::Numeric(format!(
                "Cholesky of RBF covariance failed (n={n}, length_scale={}, jitter={})",
                spec.length_scale, spec.jitter
            ))
        })?;
        let l = chol.l();
        let mut factor = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                factor[i * n + j] = l[(i, j)];
            }
        }
        Ok(Self {
            n,
            std_dev: spec.variance.sqrt(),
            factor,
        })
    }

    /// Draw before clamping.
    pub fn draw_unclamped<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
        (0..self.n)
            .map(|i| {
                let row = &self.factor[i * self.n..i * self.n + i + 1];
                self.std_dev * row.iter().zip(&z).map(|(l, z)| l * z).sum::<f64>()
            })
            .collect()
    }

    /// Draw clamped to `[-1, 1]`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut values = self.draw_unclamped(rng);
        for v in &mut values {
            *v = v.clamp(-1.0, 1.0);
        }
        values
    }
}

/// Mean-zero RBF Gaussian random field on `grid`, clamped to `[-1, 1]`.
pub fn sample_grf(spec: &GrfSpec, grid: &SensorGrid, seed: u64) -> Result<FunctionSample> {
    let sampler = GrfSampler::new(spec, grid)?;
    let mut rng = rng::stream(seed, &[]);
    Ok(FunctionSample::new(sampler.draw(&mut rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierSpec {
    pub n_modes: usize,
    pub decay: f64,
}

impl Default for FourierSpec {
    fn default() -> Self {
        Self { n_modes: 5, decay: 2.0 }
    }
}

impl FourierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::Parameter("Fourier series needs at least one mode".into()));
        }
        if !self.decay.is_finite() {
            return Err(Error::Parameter(format!("non-finite Fourier decay {}", self.decay)));
        }
        Ok(())
    }
}

/// `v(x) = Σ_k k^(-decay) (a_k sin(2πkx) + b_k cos(2πkx))`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    decay: f64,
    sin_coeffs: Vec<f64>,
    cos_coeffs: Vec<f64>,
}

impl FourierSeries {
    pub fn from_coefficients(decay: f64, sin_coeffs: Vec<f64>, cos_coeffs: Vec<f64>) -> Result<Self> {
        if sin_coeffs.len() != cos_coeffs.len() || sin_coeffs.is_empty() {
            return Err(Error::Parameter(format!(
                "need equal, non-zero numbers of sine and cosine coefficients (got {} and {})",
                sin_coeffs.len(),
                cos_coeffs.len()
            )));
        }
        Ok(Self {
            decay,
            sin_coeffs,
            cos_coeffs,
        })
    }

    pub fn random<R: Rng + ?Sized>(spec: &FourierSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut sin_coeffs = Vec::with_capacity(spec.n_modes);
        let mut cos_coeffs = Vec::with_capacity(spec.n_modes);
        for _ in 0..spec.n_modes {
            sin_coeffs.push(rng.sample(StandardNormal));
            cos_coeffs.push(rng.sample(StandardNormal));
        }
        Self::from_coefficients(spec.decay, sin_coeffs, cos_coeffs)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut total = 0.0;
        for (idx, (a, b)) in self.sin_coeffs.iter().zip(&self.cos_coeffs).enumerate() {
            let k = (idx + 1) as f64;
            // reduce the phase to [0, 1) so x = 0 and x = 1 evaluate identically
            let phase = TAU * (k * x).rem_euclid(1.0);
            total += k.powf(-self.decay) * (a * phase.sin() + b * phase.cos());
        }
        total
    }

    pub fn eval_on(&self, grid: &SensorGrid) -> Vec<f64> {
        grid.locations().iter().map(|&x| self.eval(x)).collect()
    }
}

pub fn sample_periodic_fourier(n_modes: usize, decay: f64, grid: &SensorGrid, seed: u64) -> Result<FunctionSample> {
    let mut rng = rng::stream(seed, &[]);
    let series = FourierSeries::random(&FourierSpec { n_modes, decay }, &mut rng)?;
    Ok(FunctionSample::new(series.eval_on(grid)))
}

fn symmetrized_coefficient(u: &[f64], base: f64, scale: f64, floor: f64) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|j| (base + scale * (u[j] + u[n - 1 - j]) / 2.0).max(floor))
        .collect()
}

/// `a(x_j) = max(floor, base + scale · (u(x_j) + u(1 - x_j)) / 2)`, applied
/// to the sensor values and to the dense values when present.
pub fn diffusion_coefficient(u: &FunctionSample, base: f64, scale: f64, floor: f64) -> Result<FunctionSample> {
    if !(floor > 0.0) {
        return Err(Error::Parameter(format!("coefficient floor must be > 0, got {floor}")));
    }
    Ok(FunctionSample {
        values: symmetrized_coefficient(&u.values, base, scale, floor),
        dense_values: u
            .dense_values
            .as_ref()
            .map(|d| symmetrized_coefficient(d, base, scale, floor)),
    })
}

/// Mean of a periodic function sampled on a grid that includes both
/// endpoints (trapezoid weights, so the duplicated endpoint counts once).
pub fn periodic_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return values.first().copied().unwrap_or(0.0);
    }
    let interior: f64 = values[1..n - 1].iter().sum();
    (interior + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
}
