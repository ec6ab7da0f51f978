use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PointSet;
use crate::random::NoiseSource;

/// Orthonormal basis of a truncated Karhunen–Loève expansion on `(0,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralBasis {
    /// `φ_k(x) = e^{2πikx}`, `k ∈ {−K, …, K}`.
    PeriodicFourier,
    /// `ψ_j(x) = √2 sin(jπx)`, `j = 1, …, K`.
    SineDirichlet,
    /// `ψ_j(x) = √2 cos(jπx)`, `j = 1, …, K` (mean-zero Neumann modes).
    CosineNeumann,
}

/// Eigenvalues `λ_k²` of a covariance diagonal in a [`SpectralBasis`].
///
/// `eigenvalues[k]` holds `λ_k²` for mode index `k = 0..=K`; the periodic
/// basis is isotropic (`λ_{−k} = λ_k`), and entry `0` is ignored by the sine
/// and cosine bases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCovariance {
    pub basis: SpectralBasis,
    pub eigenvalues: Vec<f64>,
}

impl SpectralCovariance {
    pub fn new(basis: SpectralBasis, eigenvalues: Vec<f64>) -> Result<Self> {
        let cov = Self { basis, eigenvalues };
        cov.validate()?;
        Ok(cov)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eigenvalues.len() < 2 {
            return Err(Error::invalid("spectral covariance needs truncation K >= 1"));
        }
        if self.eigenvalues.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::invalid("spectral eigenvalues must be finite and non-negative"));
        }
        Ok(())
    }

    /// Truncation index `K`.
    pub fn truncation(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    /// Brownian bridge on `(0,1)`: sine basis with `α_j² = 1/(π² j²)`.
    pub fn brownian_bridge(k: usize) -> Self {
        Self { basis: SpectralBasis::SineDirichlet, eigenvalues: inverse_square_spectrum(k) }
    }

    /// Cosine-basis analogue with the same `α_j² = 1/(π² j²)`.
    pub fn neumann_bridge(k: usize) -> Self {
        Self { basis: SpectralBasis::CosineNeumann, eigenvalues: inverse_square_spectrum(k) }
    }

    /// Periodic spectrum `λ_k² = amplitude · (1 + k²)^{−decay}`.
    pub fn periodic_power_law(k: usize, amplitude: f64, decay: f64) -> Self {
        let eigenvalues = (0..=k).map(|m| amplitude * (1.0 + (m * m) as f64).powf(-decay)).collect();
        Self { basis: SpectralBasis::PeriodicFourier, eigenvalues }
    }

    /// Periodic spectrum with `λ_k² = value` for every `0 ≤ |k| ≤ K`.
    pub fn periodic_flat(k: usize, value: f64) -> Self {
        Self { basis: SpectralBasis::PeriodicFourier, eigenvalues: vec![value; k + 1] }
    }

    /// Squared modulus `|λ_k|²` of the coefficient that multiplies
    /// `e^{2πikx}` in the convolution recursion.
    ///
    /// The sine and cosine modes enter through `ψ_j = (φ_j ∓ φ_{−j}) / √2`
    /// (up to a phase), so both `±j` receive half of `α_j²`.
    pub fn fourier_variance(&self, k: i64) -> f64 {
        let m = k.unsigned_abs() as usize;
        if m > self.truncation() {
            return 0.0;
        }
        match self.basis {
            SpectralBasis::PeriodicFourier => self.eigenvalues[m],
            SpectralBasis::SineDirichlet | SpectralBasis::CosineNeumann => {
                if m == 0 {
                    0.0
                } else {
                    0.5 * self.eigenvalues[m]
                }
            }
        }
    }

    /// Draws the coefficients `ξ̂(k)` of a sample for the given Fourier modes.
    ///
    /// Periodic: independent `λ_k η_k`, one real normal per listed mode.
    /// Sine: `ξ̂(±j) = ±α_j ζ_j / (√2 i)`; cosine: `ξ̂(±j) = α_j ζ_j / √2`,
    /// with one `ζ_j` per `j = 1..=K` shared by `±j`.
    pub fn sample_fourier_multipliers<N: NoiseSource + ?Sized>(
        &self,
        modes: &[i64],
        noise: &mut N,
    ) -> Vec<Complex64> {
        match self.basis {
            SpectralBasis::PeriodicFourier => modes
                .iter()
                .map(|&k| {
                    let eta = noise.standard_normal();
                    Complex64::new(self.fourier_variance(k).sqrt() * eta, 0.0)
                })
                .collect(),
            SpectralBasis::SineDirichlet | SpectralBasis::CosineNeumann => {
                let zeta: Vec<f64> = (0..=self.truncation())
                    .map(|j| if j == 0 { 0.0 } else { noise.standard_normal() })
                    .collect();
                modes
                    .iter()
                    .map(|&k| {
                        let m = k.unsigned_abs() as usize;
                        if m == 0 || m > self.truncation() {
                            return Complex64::new(0.0, 0.0);
                        }
                        let amp = self.eigenvalues[m].sqrt() * zeta[m] / std::f64::consts::SQRT_2;
                        match self.basis {
                            SpectralBasis::SineDirichlet => {
                                Complex64::new(0.0, -(k.signum() as f64) * amp)
                            }
                            _ => Complex64::new(amp, 0.0),
                        }
                    })
                    .collect()
            }
        }
    }
}

fn inverse_square_spectrum(k: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    (0..=k).map(|j| if j == 0 { 0.0 } else { 1.0 / (pi2 * (j * j) as f64) }).collect()
}

/// A spectral draw: expansion coefficients and the synthesized values.
#[derive(Clone, Debug)]
pub struct SpectralSample {
    /// `(mode index, coefficient)`; coefficient is `λ_k η_k`.
    pub coefficients: Vec<(i64, Complex64)>,
    /// Field values at the requested points.
    pub values: Vec<Complex64>,
}

impl SpectralSample {
    pub fn real_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }
}

/// Draws `Σ_k λ_k η_k φ_k` at one-dimensional `points`.
pub fn sample_spectral<N: NoiseSource + ?Sized>(
    cov: &SpectralCovariance,
    points: &PointSet,
    noise: &mut N,
) -> Result<SpectralSample> {
    cov.validate()?;
    if points.dim() != 1 {
        return Err(Error::invalid("spectral sampling is implemented on (0,1) only"));
    }
    let k_max = cov.truncation() as i64;
    let modes: Vec<i64> = match cov.basis {
        SpectralBasis::PeriodicFourier => (-k_max..=k_max).collect(),
        _ => (1..=k_max).collect(),
    };
    let coefficients: Vec<(i64, Complex64)> = modes
        .iter()
        .map(|&k| {
            let lambda = cov.eigenvalues[k.unsigned_abs() as usize].sqrt();
            (k, Complex64::new(lambda * noise.standard_normal(), 0.0))
        })
        .collect();
    let two_pi = 2.0 * std::f64::consts::PI;
    let pi = std::f64::consts::PI;
    let sqrt2 = std::f64::consts::SQRT_2;
    let values = points
        .coords()
        .iter()
        .map(|&x| {
            coefficients
                .iter()
                .map(|&(k, c)| match cov.basis {
                    SpectralBasis::PeriodicFourier => c * Complex64::from_polar(1.0, two_pi * k as f64 * x),
                    SpectralBasis::SineDirichlet => c * (sqrt2 * (pi * k as f64 * x).sin()),
                    SpectralBasis::CosineNeumann => c * (sqrt2 * (pi * k as f64 * x).cos()),
                })
                .sum()
        })
        .collect();
    Ok(SpectralSample { coefficients, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Layout};
    use crate::random::{stream, Replay};

    #[test]
    fn sine_fields_vanish_at_the_ends() {
        let pts = PointSet::from_1d(&[0.0, 0.37, 1.0]).unwrap();
        let s = sample_spectral(&SpectralCovariance::brownian_bridge(64), &pts, &mut stream(1, 0)).unwrap();
        assert!(s.values[0].norm() < 1e-12);
        assert!(s.values[2].norm() < 1e-12);
        assert!(s.values[1].norm() > 0.0);
        assert_eq!(s.coefficients.len(), 64);
    }

    #[test]
    fn single_mode_is_exact() {
        let cov = SpectralCovariance::new(SpectralBasis::PeriodicFourier, vec![0.0, 1.0, 0.0]).unwrap();
        let grid = Grid::new(1, 16, Layout::Periodic).unwrap();
        let noise = [0.0, 0.0, 0.0, 1.3, 0.0];
        let s = sample_spectral(&cov, grid.points(), &mut Replay::new(&noise)).unwrap();
        for (i, v) in s.values.iter().enumerate() {
            let x = grid.points().point(i)[0];
            let expected = Complex64::from_polar(1.3, 2.0 * std::f64::consts::PI * x);
            assert!((v - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn bridge_fourier_variances() {
        let cov = SpectralCovariance::brownian_bridge(64);
        let pi2 = std::f64::consts::PI.powi(2);
        for k in 1..=64i64 {
            let expected = 1.0 / (2.0 * pi2 * (k * k) as f64);
            assert!((cov.fourier_variance(k) - expected).abs() < 1e-15);
            assert_eq!(cov.fourier_variance(-k), cov.fourier_variance(k));
        }
        assert_eq!(cov.fourier_variance(0), 0.0);
        assert_eq!(cov.fourier_variance(65), 0.0);
    }

    #[test]
    fn sine_multipliers_are_conjugate_antisymmetric_pairs() {
        let cov = SpectralCovariance::brownian_bridge(4);
        let mult = cov.sample_fourier_multipliers(&[1, -1, 3, -3, 0, 5], &mut stream(2, 0));
        assert!((mult[0] + mult[1]).norm() < 1e-15);
        assert!((mult[2] + mult[3]).norm() < 1e-15);
        assert_eq!(mult[4], Complex64::new(0.0, 0.0));
        assert_eq!(mult[5], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn built_in_spectra_are_non_increasing() {
        for cov in [
            SpectralCovariance::brownian_bridge(32),
            SpectralCovariance::neumann_bridge(32),
            SpectralCovariance::periodic_power_law(32, 2.0, 1.5),
        ] {
            let start = if cov.basis == SpectralBasis::PeriodicFourier { 0 } else { 1 };
            assert!(cov.eigenvalues[start..].windows(2).all(|w| w[1] <= w[0]));
            assert!(cov.eigenvalues.iter().sum::<f64>().is_finite());
        }
    }
}
