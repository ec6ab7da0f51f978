//! Stationary and nonstationary correlation kernels.
//!
//! The nonstationary kernel is the Paciorek construction with length-scale
//! matrix `Σ(x) = G(x) I_d`:
//!
//! ```text
//! ρ(x, x') = (4 G(x) G(x') / (G(x) + G(x'))²)^{d/4} · ρ_S(√Q),
//! Q        = 2 ‖x − x'‖² / (G(x) + G(x')).
//! ```
//!
//! With `G = F(u)` for a layer `u` this induces the correlation matrix `R(u)`
//! used by the covariance-function construction. Only correlation kernels
//! (unit value at the origin) are supported, so `R(u)` always has unit diagonal
//! and trace `N`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sq_dist, FieldVector, PointSet};

/// Isotropic kernel as a function of distance `r ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum IsotropicKernel {
    /// `h(r) = σ² exp(−r² / (2 w²))`.
    SquaredExponential { sigma2: f64, w2: f64 },
    /// `ρ_S(r) = exp(−r²)`.
    GaussianCorrelation,
}

impl IsotropicKernel {
    pub fn eval(&self, r: f64) -> f64 {
        self.eval_sq(r * r)
    }

    /// Kernel value from the squared distance.
    pub fn eval_sq(&self, r2: f64) -> f64 {
        match *self {
            IsotropicKernel::SquaredExponential { sigma2, w2 } => sigma2 * (-r2 / (2.0 * w2)).exp(),
            IsotropicKernel::GaussianCorrelation => (-r2).exp(),
        }
    }

    /// Value at the origin.
    pub fn variance(&self) -> f64 {
        match *self {
            IsotropicKernel::SquaredExponential { sigma2, .. } => sigma2,
            IsotropicKernel::GaussianCorrelation => 1.0,
        }
    }

    pub fn is_correlation(&self) -> bool {
        self.variance() == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if let IsotropicKernel::SquaredExponential { sigma2, w2 } = *self {
            if !(sigma2 > 0.0 && w2 > 0.0 && sigma2.is_finite() && w2.is_finite()) {
                return Err(Error::invalid("squared-exponential kernel needs sigma2, w2 > 0"));
            }
        }
        Ok(())
    }
}

/// Evaluates an isotropic kernel at distance `r`.
pub fn eval_isotropic(kernel: &IsotropicKernel, r: f64) -> f64 {
    kernel.eval(r)
}

/// Pointwise map turning a layer value into a squared length scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LengthScaleMap {
    /// `F(x) = x²`.
    Square,
    /// `F(x) = exp(x)`. Grows fast enough to make `R(u)` badly conditioned;
    /// prefer `Square` or `ClampedExp` unless that is the point.
    Exp,
    /// `F(x) = min{F_− + a·exp(b x²), F_+}`.
    ClampedExp { f_minus: f64, a: f64, b: f64, f_plus: f64 },
}

impl LengthScaleMap {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            LengthScaleMap::Square => x * x,
            LengthScaleMap::Exp => x.exp(),
            LengthScaleMap::ClampedExp { f_minus, a, b, f_plus } => {
                (f_minus + a * (b * x * x).exp()).min(f_plus)
            }
        }
    }

    pub fn apply_field(&self, u: &FieldVector) -> FieldVector {
        u.map(|x| self.apply(x))
    }

    pub fn validate(&self) -> Result<()> {
        if let LengthScaleMap::ClampedExp { f_minus, a, b, f_plus } = *self {
            let ok = [f_minus, a, b, f_plus].iter().all(|v| *v > 0.0 && v.is_finite());
            if !ok {
                return Err(Error::invalid("clamped-exp length-scale map needs positive parameters"));
            }
        }
        Ok(())
    }

    /// The one-dimensional covariance-operator parameters `F_+ = 150², F_− = 200, a = 100, b = 2`.
    pub fn clamped_exp_1d() -> Self {
        LengthScaleMap::ClampedExp { f_minus: 200.0, a: 100.0, b: 2.0, f_plus: 150.0 * 150.0 }
    }

    /// The two-dimensional covariance-operator parameters `F_+ = 150², F_− = 50, a = 25, b = 0.3`.
    pub fn clamped_exp_2d() -> Self {
        LengthScaleMap::ClampedExp { f_minus: 50.0, a: 25.0, b: 0.3, f_plus: 150.0 * 150.0 }
    }
}

/// Paciorek correlation between `x` and `xp` with squared length scales `gx`, `gxp`.
///
/// Uses the limit values when a length scale vanishes: `ρ(x, x) = 1` always and
/// `ρ(x, x') = 0` for `x ≠ x'` once either scale is zero. This makes `ρ`
/// discontinuous in `(gx, gxp)` at the origin.
pub fn paciorek_correlation(x: &[f64], xp: &[f64], gx: f64, gxp: f64, base: &IsotropicKernel) -> f64 {
    paciorek_from_sq_dist(sq_dist(x, xp), x.len(), gx, gxp, base)
}

/// Same formula without the zero-scale guard; rejects `gx = gxp = 0`.
pub fn paciorek_correlation_unguarded(
    x: &[f64],
    xp: &[f64],
    gx: f64,
    gxp: f64,
    base: &IsotropicKernel,
) -> Result<f64> {
    let s = gx + gxp;
    if s == 0.0 {
        return Err(Error::invalid("paciorek correlation undefined for gx = gxp = 0"));
    }
    let d = x.len() as f64;
    let prefactor = (4.0 * gx * gxp / (s * s)).powf(d / 4.0);
    let q = 2.0 * sq_dist(x, xp) / s;
    Ok(prefactor * base.eval_sq(q))
}

fn paciorek_from_sq_dist(r2: f64, dim: usize, gx: f64, gxp: f64, base: &IsotropicKernel) -> f64 {
    if r2 == 0.0 {
        return 1.0;
    }
    if gx == 0.0 || gxp == 0.0 {
        return 0.0;
    }
    let s = gx + gxp;
    let ratio = 4.0 * gx * gxp / (s * s);
    let prefactor = match dim {
        1 => ratio.sqrt().sqrt(),
        2 => ratio.sqrt(),
        _ => ratio.powf(dim as f64 / 4.0),
    };
    prefactor * base.eval_sq(2.0 * r2 / s)
}

/// Symmetric correlation matrix together with the points it was built on.
#[derive(Clone, Debug)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    points: PointSet,
}

impl CorrelationMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }
}

/// Assembles `R(u)` with entries `ρ(x_i, x_j; F(u_i), F(u_j))`.
pub fn build_correlation_matrix(
    points: &PointSet,
    u: &FieldVector,
    f: &LengthScaleMap,
    base: &IsotropicKernel,
) -> Result<CorrelationMatrix> {
    let n = points.len();
    if u.len() != n {
        return Err(Error::invalid(format!("field has {} values for {n} points", u.len())));
    }
    if !base.is_correlation() {
        return Err(Error::invalid("base kernel must be a correlation kernel"));
    }
    let g: Vec<f64> = u.iter().map(|&v| f.apply(v)).collect();
    if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("length-scale map produced a negative or non-finite value"));
    }
    let dim = points.dim();
    let mut entries = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        for i in j + 1..n {
            let r2 = points.sq_dist(i, j);
            if r2 == 0.0 {
                return Err(Error::invalid(format!("points {j} and {i} coincide")));
            }
            let v = paciorek_from_sq_dist(r2, dim, g[i], g[j], base);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(CorrelationMatrix { entries, points: points.clone() })
}

/// Stationary correlation matrix `ρ_S(‖x_i − x_j‖)` at unit length scale.
pub fn stationary_correlation_matrix(points: &PointSet, base: &IsotropicKernel) -> Result<CorrelationMatrix> {
    let n = points.len();
    build_correlation_matrix(points, &FieldVector::from_element(n, 1.0), &LengthScaleMap::Square, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Layout};
    use proptest::prelude::*;

    const RHO: IsotropicKernel = IsotropicKernel::GaussianCorrelation;

    #[test]
    fn isotropic_values() {
        assert_eq!(eval_isotropic(&RHO, 0.0), 1.0);
        let se = IsotropicKernel::SquaredExponential { sigma2: 2.0, w2: 1.0 };
        assert_eq!(eval_isotropic(&se, 0.0), 2.0);
        assert!((eval_isotropic(&RHO, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((se.eval(1.0) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn paciorek_limits() {
        assert_eq!(paciorek_correlation(&[0.3], &[0.3], 0.7, 0.7, &RHO), 1.0);
        assert_eq!(paciorek_correlation(&[0.3], &[0.3], 0.0, 0.0, &RHO), 1.0);
        assert_eq!(paciorek_correlation(&[0.1], &[0.4], 0.0, 2.0, &RHO), 0.0);
        assert_eq!(paciorek_correlation(&[0.1], &[0.4], 0.0, 0.0, &RHO), 0.0);
        assert!(paciorek_correlation_unguarded(&[0.1], &[0.4], 0.0, 0.0, &RHO).is_err());
        let tiny = paciorek_correlation(&[0.1], &[0.4], 1e-9, 1e-9, &RHO);
        assert!(tiny < 1e-300);
    }

    #[test]
    fn equal_scales_collapse_prefactor() {
        let g = 0.2;
        let v = paciorek_correlation(&[0.1, 0.2], &[0.5, 0.4], g, g, &RHO);
        let r = ((0.4f64).powi(2) + (0.2f64).powi(2)).sqrt();
        assert!((v - RHO.eval(r / g.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn constant_scale_reduction_on_17_points() {
        let grid = Grid::new(1, 17, Layout::Nodal).unwrap();
        let g = 0.35;
        let mut worst: f64 = 0.0;
        for i in 0..17 {
            for j in 0..17 {
                let (x, y) = (grid.points().point(i), grid.points().point(j));
                let v = paciorek_correlation(x, y, g, g, &RHO);
                let r = sq_dist(x, y).sqrt();
                worst = worst.max((v - RHO.eval(r / g.sqrt())).abs());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn small_matrix_cases() {
        let pts = PointSet::from_1d(&[0.5]).unwrap();
        let r = build_correlation_matrix(&pts, &FieldVector::from_element(1, 2.0), &LengthScaleMap::Exp, &RHO)
            .unwrap();
        assert_eq!(r.entries()[(0, 0)], 1.0);
        let dup = PointSet::from_1d(&[0.2, 0.2]).unwrap();
        assert!(build_correlation_matrix(&dup, &FieldVector::zeros(2), &LengthScaleMap::Square, &RHO).is_err());
        let se = IsotropicKernel::SquaredExponential { sigma2: 2.0, w2: 1.0 };
        let two = PointSet::from_1d(&[0.2, 0.4]).unwrap();
        assert!(build_correlation_matrix(&two, &FieldVector::zeros(2), &LengthScaleMap::Square, &se).is_err());
    }

    #[test]
    fn clamped_exp_bounds() {
        let f = LengthScaleMap::clamped_exp_1d();
        assert_eq!(f.apply(0.0), 300.0);
        assert_eq!(f.apply(10.0), 22500.0);
        assert!(LengthScaleMap::ClampedExp { f_minus: 0.0, a: 1.0, b: 1.0, f_plus: 2.0 }.validate().is_err());
    }

    fn map_strategy() -> impl Strategy<Value = LengthScaleMap> {
        prop_oneof![
            Just(LengthScaleMap::Square),
            Just(LengthScaleMap::Exp),
            Just(LengthScaleMap::ClampedExp { f_minus: 0.01, a: 0.02, b: 0.5, f_plus: 1.0 }),
        ]
    }

    proptest! {
        #[test]
        fn symmetric_under_swap(x in 0.0..1.0f64, y in 0.0..1.0f64, gx in 0.0..5.0f64, gy in 0.0..5.0f64) {
            let a = paciorek_correlation(&[x], &[y], gx, gy, &RHO);
            let b = paciorek_correlation(&[y], &[x], gy, gx, &RHO);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bounded_by_one(x in prop::array::uniform2(0.0..1.0f64), y in prop::array::uniform2(0.0..1.0f64),
                          gx in 0.0..10.0f64, gy in 0.0..10.0f64) {
            let v = paciorek_correlation(&x, &y, gx, gy, &RHO);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn monotone_isotropic(r in 0.0..5.0f64, dr in 0.0..1.0f64, s2 in 0.1..4.0f64, w2 in 0.1..4.0f64) {
            for k in [RHO, IsotropicKernel::SquaredExponential { sigma2: s2, w2 }] {
                prop_assert!(k.eval(r + dr) <= k.eval(r));
            }
        }

        #[test]
        fn unit_diagonal_and_trace(u in prop::collection::vec(-3.0..3.0f64, 2..40), f in map_strategy()) {
            let n = u.len();
            let grid = Grid::cell_centred(1, n).unwrap();
            let r = build_correlation_matrix(grid.points(), &FieldVector::from_vec(u), &f, &RHO).unwrap();
            prop_assert!((r.trace() - n as f64).abs() < 1e-12);
            let e = r.entries();
            for i in 0..n {
                prop_assert_eq!(e[(i, i)], 1.0);
                for j in 0..n {
                    prop_assert_eq!(e[(i, j)], e[(j, i)]);
                }
            }
        }

        /// Positive semi-definite up to round-off: the smallest eigenvalue of
        /// a Gaussian-kernel matrix is often far below machine precision, so
        /// the floating-point eigenvalue can only be bounded below by the
        /// backward error of the eigensolver.
        #[test]
        fn semidefinite_up_to_roundoff(u in prop::collection::vec(-3.0..3.0f64, 2..34), f in map_strategy()) {
            let n = u.len();
            let grid = Grid::cell_centred(1, n).unwrap();
            let r = build_correlation_matrix(grid.points(), &FieldVector::from_vec(u), &f, &RHO).unwrap();
            let eig = r.entries().clone().symmetric_eigenvalues();
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(min > -1e-13 * n as f64);
        }
    }
}
