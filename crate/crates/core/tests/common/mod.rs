#![allow(dead_code)]

use operon_core::model::OperatorModel;
use operon_core::tensor::Tensor2;
use operon_core::train::mse;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

/// Random inputs for `model`: one `batch × m_i` matrix per input function
/// and `batch × 2` queries in the unit square.
pub fn random_inputs<R: Rng>(rng: &mut R, model: &OperatorModel, batch: usize) -> (Vec<Tensor2>, Tensor2) {
    let functions = model
        .spec()
        .sensor_counts
        .iter()
        .map(|&m| random_matrix(rng, batch, m, -1.0, 1.0))
        .collect();
    (functions, random_matrix(rng, batch, model.spec().query_dim, 0.0, 1.0))
}

/// Analytic MSE gradient through forward/backward.
pub fn analytic_gradient(model: &mut OperatorModel, functions: &[Tensor2], y: &Tensor2, targets: &[f64]) -> Vec<f64> {
    let refs: Vec<&Tensor2> = functions.iter().collect();
    model.clear_cache();
    operon_core::optim::Parameters::zero_grad(model);
    let pred = model.forward(&refs, y).unwrap();
    let b = targets.len() as f64;
    let upstream: Vec<f64> = pred.iter().zip(targets).map(|(p, t)| 2.0 * (p - t) / b).collect();
    model.backward(&upstream).unwrap();
    model.gradients()
}

/// Central finite differences of the MSE with step `h`.
pub fn numeric_gradient(model: &OperatorModel, functions: &[Tensor2], y: &Tensor2, targets: &[f64], h: f64) -> Vec<f64> {
    let refs: Vec<&Tensor2> = functions.iter().collect();
    let base = model.parameters();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + h;
        probe.set_parameters(&params).unwrap();
        let plus = mse(&probe.predict(&refs, y).unwrap(), targets).unwrap();
        params[i] = base[i] - h;
        probe.set_parameters(&params).unwrap();
        let minus = mse(&probe.predict(&refs, y).unwrap(), targets).unwrap();
        params[i] = base[i];
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Largest relative error `|a - n| / max(|a|, |n|)` over components whose
/// magnitude exceeds `floor`. Below it central differences at h = 1e-6 are
/// dominated by roundoff (about 1e-10 absolute), so those components must
/// agree absolutely within `NOISE`.
pub const NOISE: f64 = 1e-9;

pub fn worst_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            if scale < floor {
                if (a - n).abs() <= NOISE {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (a - n).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}
