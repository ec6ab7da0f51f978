//! Convolution step `u_{n+1} = u_n * ξ_{n+1}` on the periodic unit interval,
//! carried out coefficient-wise: `û_{n+1}(k) = û_n(k) ξ̂_{n+1}(k)`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::fields::SpectralCovariance;
use crate::random::NoiseSource;

/// Normalized discrete Fourier transform on an `n`-point periodic grid.
///
/// `forward` returns `û(k) = (1/n) Σ_j u_j e^{−2πikx_j}`, the quadrature
/// approximation of `∫ u φ̄_k`; `inverse` returns `Σ_k û(k) e^{2πikx_j}`.
#[derive(Clone)]
pub struct PeriodicTransform {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PeriodicTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicTransform").field("n", &self.n).finish()
    }
}

impl PeriodicTransform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wavenumber of FFT bin `b`.
    pub fn mode(&self, b: usize) -> i64 {
        if b <= self.n / 2 {
            b as i64
        } else {
            b as i64 - self.n as i64
        }
    }

    pub fn modes(&self) -> Vec<i64> {
        (0..self.n).map(|b| self.mode(b)).collect()
    }

    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut buf = values.to_vec();
        self.fwd.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut buf = coeffs.to_vec();
        self.inv.process(&mut buf);
        buf
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&c)
    }
}

/// Quadrature convolution `(u * ξ)(x_i) = (1/n) Σ_j u(x_i − y_j) ξ(y_j)` via the FFT.
pub fn periodic_convolve(transform: &PeriodicTransform, u: &[Complex64], xi: &[Complex64]) -> Vec<Complex64> {
    let uh = transform.forward(u);
    let xh = transform.forward(xi);
    let prod: Vec<Complex64> = uh.iter().zip(&xh).map(|(a, b)| a * b).collect();
    transform.inverse(&prod)
}

/// One convolution step on Fourier coefficients (FFT bin order).
/// Returns the new coefficients; the multipliers are drawn per
/// [`SpectralCovariance::sample_fourier_multipliers`].
pub fn step_coefficients<N: NoiseSource + ?Sized>(
    coeffs: &[Complex64],
    cov: &SpectralCovariance,
    transform: &PeriodicTransform,
    noise: &mut N,
) -> Vec<Complex64> {
    let mult = cov.sample_fourier_multipliers(&transform.modes(), noise);
    coeffs.iter().zip(&mult).map(|(c, m)| c * m).collect()
}
