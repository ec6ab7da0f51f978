//! Composition step `u_{n+1}(x) = ξ_{n+1}(u_n(x))` with `ξ` an `ℝ^m`-valued
//! field of i.i.d. components sharing the kernel `h`.
//!
//! Once a layer has nearly collapsed, the kernel matrix `h(‖u_i − u_j‖)` is
//! numerically rank-deficient and a Cholesky draw (with or without jitter)
//! can no longer resolve the differences that carry all of the information.
//! Below a small radius the step instead samples the jointly Gaussian Taylor
//! coefficients of each `ξ^j` at the layer's centre and evaluates the
//! truncated series at the centred deviations. Layers are stored as
//! `offset + deviation` so that spreads far below the offset stay exact.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::Layer;
use crate::error::{Error, Result};
use crate::grid::{sq_dist, PointSet};
use crate::kernels::IsotropicKernel;
use crate::linalg::CholeskyFactor;
use crate::random::NoiseSource;

/// Largest `max_i ‖t_i‖ / w` for which the Taylor path is used.
pub const TAYLOR_RADIUS: f64 = 0.02;

/// Taylor terms of total degree `< TAYLOR_ORDER` are kept.
pub const TAYLOR_ORDER: usize = 8;

pub(crate) fn step<N: NoiseSource + ?Sized>(
    layer: &Layer,
    kernel: &IsotropicKernel,
    width: usize,
    connect_input: bool,
    inputs: &PointSet,
    noise: &mut N,
) -> Result<Layer> {
    let n = layer.len();
    if inputs.len() != n {
        return Err(Error::invalid("layer and input points differ in length"));
    }
    if layer.deviation.iter().chain(layer.offset.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("composition step needs a finite-valued layer"));
    }
    let (sigma2, w2) = match *kernel {
        IsotropicKernel::SquaredExponential { sigma2, w2 } => (sigma2, w2),
        IsotropicKernel::GaussianCorrelation => (1.0, 0.5),
    };
    let (reps, map) = distinct_nodes(layer, connect_input.then_some(inputs));
    let unique = DMatrix::from_fn(reps.len(), layer.width(), |r, c| layer.deviation[(reps[r], c)]);
    let sub = sample_distinct(&centre_columns(&unique), &reps, sigma2, w2, kernel, width, connect_input, inputs, noise)?;
    let deviation = DMatrix::from_fn(n, width, |i, j| sub.deviation[(map[i], j)]);
    Ok(Layer { offset: sub.offset, deviation })
}

/// Representatives of the distinct inputs to `ξ` and the map from nodes to them.
/// Equal inputs must produce bit-identical outputs, so `ξ` is only ever sampled
/// at distinct points.
fn distinct_nodes(layer: &Layer, inputs: Option<&PointSet>) -> (Vec<usize>, Vec<usize>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let mut map = Vec::with_capacity(layer.len());
    for i in 0..layer.len() {
        let mut key: Vec<u64> = layer.deviation.row(i).iter().map(|v| (v + 0.0).to_bits()).collect();
        if let Some(p) = inputs {
            key.extend(p.point(i).iter().map(|v| (v + 0.0).to_bits()));
        }
        let next = reps.len();
        let r = *seen.entry(key).or_insert(next);
        if r == next {
            reps.push(i);
        }
        map.push(r);
    }
    (reps, map)
}

#[allow(clippy::too_many_arguments)]
fn sample_distinct<N: NoiseSource + ?Sized>(
    centred: &DMatrix<f64>,
    reps: &[usize],
    sigma2: f64,
    w2: f64,
    kernel: &IsotropicKernel,
    width: usize,
    connect_input: bool,
    inputs: &PointSet,
    noise: &mut N,
) -> Result<Layer> {
    let n = centred.nrows();
    if !connect_input {
        let w = w2.sqrt();
        let radius = (0..n).map(|i| centred.row(i).norm()).fold(0.0, f64::max) / w;
        if radius <= TAYLOR_RADIUS {
            return Ok(taylor_step(centred, sigma2, w, width, noise));
        }
    }
    let m_in = centred.ncols();
    let d = if connect_input { inputs.dim() } else { 0 };
    let mut aug = DMatrix::zeros(n, m_in + d);
    for i in 0..n {
        for c in 0..m_in {
            aug[(i, c)] = centred[(i, c)];
        }
        for c in 0..d {
            aug[(i, m_in + c)] = inputs.point(reps[i])[c];
        }
    }
    let kmat = DMatrix::from_fn(n, n, |i, j| {
        let a: Vec<f64> = aug.row(i).iter().copied().collect();
        let b: Vec<f64> = aug.row(j).iter().copied().collect();
        kernel.eval_sq(sq_dist(&a, &b))
    });
    let factor = CholeskyFactor::new_with_jitter(&kmat)?;
    let mut values = DMatrix::zeros(n, width);
    let mut z = DVector::zeros(n);
    for j in 0..width {
        noise.fill_normal(z.as_mut_slice());
        values.set_column(j, &factor.mul_l(&z));
    }
    let offset: Vec<f64> = (0..width).map(|j| values.column(j).mean()).collect();
    let deviation = DMatrix::from_fn(n, width, |i, j| values[(i, j)] - offset[j]);
    Ok(Layer { offset, deviation })
}

fn centre_columns(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// Multi-indices in `m` variables of total degree `< order`, graded.
pub(crate) fn multi_indices(m: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..order {
        let mut current = vec![0; m];
        push_with_total(&mut out, &mut current, 0, total);
    }
    out
}

fn push_with_total(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, remaining: usize) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        push_with_total(out, current, pos + 1, remaining - k);
    }
}

fn double_factorial_odd(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// `Cov(ξ^{(a)}, ξ^{(b)})` at a common point for the unit Gaussian
/// `exp(−s²/2)` in one variable.
fn derivative_cov_1d(a: usize, b: usize) -> f64 {
    let s = a + b;
    if s % 2 == 1 {
        return 0.0;
    }
    let sign = if (b + s / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * double_factorial_odd(s as i64 - 1)
}

/// Covariance of the scaled derivatives `w^{|α|} ∂^α ξ` at one point, unit amplitude.
pub(crate) fn taylor_covariance(indices: &[Vec<usize>]) -> DMatrix<f64> {
    let k = indices.len();
    DMatrix::from_fn(k, k, |p, q| {
        indices[p].iter().zip(&indices[q]).map(|(&a, &b)| derivative_cov_1d(a, b)).product()
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Rows `t̃_i^α / α!` of the Taylor design matrix, with `t̃ = t / w`.
pub(crate) fn taylor_design(centred: &DMatrix<f64>, w: f64, indices: &[Vec<usize>]) -> DMatrix<f64> {
    let n = centred.nrows();
    DMatrix::from_fn(n, indices.len(), |i, p| {
        indices[p]
            .iter()
            .enumerate()
            .map(|(c, &a)| (centred[(i, c)] / w).powi(a as i32) / factorial(a))
            .product()
    })
}

fn taylor_step<N: NoiseSource + ?Sized>(
    centred: &DMatrix<f64>,
    sigma2: f64,
    w: f64,
    width: usize,
    noise: &mut N,
) -> Layer {
    let m_in = centred.ncols();
    let indices = multi_indices(m_in, TAYLOR_ORDER);
    let cov = taylor_covariance(&indices);
    let factor = CholeskyFactor::new_strict(&cov).expect("derivative covariance is positive definite");
    let design = taylor_design(centred, w, &indices);
    let n = centred.nrows();
    let sigma = sigma2.sqrt();
    let mut offset = Vec::with_capacity(width);
    let mut deviation = DMatrix::zeros(n, width);
    let mut z = DVector::zeros(indices.len());
    for j in 0..width {
        noise.fill_normal(z.as_mut_slice());
        let coeffs = factor.mul_l(&z) * sigma;
        offset.push(coeffs[0]);
        for i in 0..n {
            let mut s = 0.0;
            for p in (1..indices.len()).rev() {
                s += design[(i, p)] * coeffs[p];
            }
            deviation[(i, j)] = s;
        }
    }
    Layer { offset, deviation }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 8).len(), 8);
        assert_eq!(multi_indices(2, 8).len(), 36);
        assert_eq!(multi_indices(3, 3).len(), 10);
        assert_eq!(multi_indices(2, 8)[0], vec![0, 0]);
    }

    #[test]
    fn derivative_covariance_entries() {
        assert_eq!(derivative_cov_1d(0, 0), 1.0);
        assert_eq!(derivative_cov_1d(1, 1), 1.0);
        assert_eq!(derivative_cov_1d(0, 2), -1.0);
        assert_eq!(derivative_cov_1d(2, 0), -1.0);
        assert_eq!(derivative_cov_1d(2, 2), 3.0);
        assert_eq!(derivative_cov_1d(1, 3), -3.0);
        assert_eq!(derivative_cov_1d(3, 1), -3.0);
        assert_eq!(derivative_cov_1d(0, 1), 0.0);
        assert_eq!(derivative_cov_1d(3, 3), 15.0);
    }

    /// The truncated series reproduces the kernel matrix it replaces.
    #[test]
    fn taylor_covariance_matches_kernel() {
        let w: f64 = 1.3;
        let sigma2 = 0.7;
        for m in [1usize, 2] {
            let n = 9;
            let t = DMatrix::from_fn(n, m, |i, c| 0.02 * w * ((i * (c + 2)) as f64 * 0.77).sin());
            let centred = centre_columns(&t);
            let idx = multi_indices(m, TAYLOR_ORDER);
            let phi = taylor_design(&centred, w, &idx);
            let implied = &phi * taylor_covariance(&idx) * phi.transpose() * sigma2;
            let kernel = IsotropicKernel::SquaredExponential { sigma2, w2: w * w };
            for i in 0..n {
                for j in 0..n {
                    let a: Vec<f64> = centred.row(i).iter().copied().collect();
                    let b: Vec<f64> = centred.row(j).iter().copied().collect();
                    let exact = kernel.eval_sq(sq_dist(&a, &b));
                    assert!((implied[(i, j)] - exact).abs() < 1e-13, "m={m} ({i},{j})");
                    let sd_exact = 2.0 * sigma2 - 2.0 * exact;
                    let sd_implied = implied[(i, i)] + implied[(j, j)] - 2.0 * implied[(i, j)];
                    if i != j {
                        assert!((sd_implied / sd_exact - 1.0).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
