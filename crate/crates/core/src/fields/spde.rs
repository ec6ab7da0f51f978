//! Covariance-operator fields sampled through sparse precision solves.
//!
//! The precision is
//!
//! ```text
//! C(u)^{-1} = σ^{-2} (P + Γ)^{α/2} Γ^{d/2 − α} (P + Γ)^{α/2},   Γ = diag F(u),
//! ```
//!
//! factored as `AᵀA` with `A = σ^{-1} Γ^{d/4 − α/2} (P + Γ)^{α/2}`. A draw
//! `v ~ N(0, C(u))` solves `A v = ξ` for discrete white noise `ξ` with
//! per-node variance `1/cell_volume`. `P` is the cell-centred finite-difference
//! negative Laplacian with mirrored ghost nodes (zero normal derivative).

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FieldVector, Grid, Layout};
use crate::kernels::LengthScaleMap;
use crate::linalg::{conjugate_gradient, norm, TridiagonalFactor};
use crate::random::{stream, NoiseSource, RandomStream};

/// Constant length-scale parameter of the base layer, `Γ ≡ 20²`.
pub const DEFAULT_BASE_GAMMA: f64 = 20.0;

const INNER_TOL: f64 = 1e-12;
const OUTER_TOL: f64 = 1e-10;
const REFINEMENTS: usize = 3;

/// Cell-centred negative Laplacian with homogeneous Neumann boundary.
#[derive(Clone, Debug)]
pub struct NeumannLaplacian {
    d: usize,
    n: usize,
    inv_h2: f64,
}

impl NeumannLaplacian {
    pub fn new(grid: &Grid) -> Result<Self> {
        if grid.layout() != Layout::CellCentred {
            return Err(Error::invalid("the Neumann Laplacian needs a cell-centred grid"));
        }
        let h = grid.spacing();
        Ok(Self { d: grid.dim(), n: grid.n_per_side(), inv_h2: 1.0 / (h * h) })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        if self.d == 1 {
            for i in 0..n {
                let mut s = 0.0;
                if i > 0 {
                    s += u[i] - u[i - 1];
                }
                if i + 1 < n {
                    s += u[i] - u[i + 1];
                }
                out[i] = s * self.inv_h2;
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let c = u[k];
                    let mut s = 0.0;
                    if i > 0 {
                        s += c - u[k - n];
                    }
                    if i + 1 < n {
                        s += c - u[k + n];
                    }
                    if j > 0 {
                        s += c - u[k - 1];
                    }
                    if j + 1 < n {
                        s += c - u[k + 1];
                    }
                    out[k] = s * self.inv_h2;
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.n;
        let count = |i: usize| (i > 0) as usize + (i + 1 < n) as usize;
        if self.d == 1 {
            (0..n).map(|i| count(i) as f64 * self.inv_h2).collect()
        } else {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    out.push((count(i) + count(j)) as f64 * self.inv_h2);
                }
            }
            out
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            a.set_column(j, &DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        a
    }
}

#[derive(Clone, Debug)]
enum ShiftedSolver {
    Direct(TridiagonalFactor),
    Iterative { diag: Vec<f64> },
}

/// The operator `A(u)` and everything needed to apply and invert it.
#[derive(Clone, Debug)]
pub struct PrecisionOperator {
    grid: Grid,
    gamma: FieldVector,
    alpha: u32,
    sigma: f64,
    laplacian: NeumannLaplacian,
    scale: Vec<f64>,
    solver: ShiftedSolver,
}

/// Assembles `A(u)` with `Γ = F(u)`.
pub fn assemble_precision(
    grid: &Grid,
    u: &FieldVector,
    f: &LengthScaleMap,
    alpha: u32,
    sigma: f64,
) -> Result<PrecisionOperator> {
    if u.len() != grid.len() {
        return Err(Error::invalid(format!("field has {} values for {} nodes", u.len(), grid.len())));
    }
    assemble_precision_from_gamma(grid, f.apply_field(u), alpha, sigma)
}

/// Assembles `A` for an explicit diagonal `Γ`.
pub fn assemble_precision_from_gamma(
    grid: &Grid,
    gamma: FieldVector,
    alpha: u32,
    sigma: f64,
) -> Result<PrecisionOperator> {
    if alpha == 0 || !alpha.is_multiple_of(2) {
        return Err(Error::invalid(format!("alpha must be a positive even integer, got {alpha}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    if gamma.len() != grid.len() {
        return Err(Error::invalid("gamma length does not match the grid"));
    }
    if let Some(i) = gamma.iter().position(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::invalid(format!("F(u) must be positive, got {} at node {i}", gamma[i])));
    }
    let laplacian = NeumannLaplacian::new(grid)?;
    let d = grid.dim() as f64;
    let exponent = d / 4.0 - alpha as f64 / 2.0;
    let scale: Vec<f64> = gamma.iter().map(|g| g.powf(exponent)).collect();
    let diag: Vec<f64> = laplacian.diagonal().iter().zip(gamma.iter()).map(|(p, g)| p + g).collect();
    let solver = if grid.dim() == 1 {
        let off = vec![-laplacian.inv_h2; grid.len().saturating_sub(1)];
        ShiftedSolver::Direct(TridiagonalFactor::new(&diag, &off)?)
    } else {
        ShiftedSolver::Iterative { diag }
    };
    Ok(PrecisionOperator { grid: grid.clone(), gamma, alpha, sigma, laplacian, scale, solver })
}

impl PrecisionOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gamma(&self) -> &FieldVector {
        &self.gamma
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn laplacian(&self) -> &NeumannLaplacian {
        &self.laplacian
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    fn half_power(&self) -> usize {
        (self.alpha / 2) as usize
    }

    /// `(P + Γ) v`.
    pub fn apply_shifted(&self, v: &[f64], out: &mut [f64]) {
        self.laplacian.apply(v, out);
        for (o, (vi, g)) in out.iter_mut().zip(v.iter().zip(self.gamma.iter())) {
            *o += g * vi;
        }
    }

    /// Solves `(P + Γ) x = b` in place.
    pub fn solve_shifted(&self, b: &mut [f64]) -> Result<()> {
        match &self.solver {
            ShiftedSolver::Direct(f) => {
                f.solve_in_place(b);
                Ok(())
            }
            ShiftedSolver::Iterative { diag } => {
                let rhs = b.to_vec();
                let mut x: Vec<f64> = rhs.iter().zip(diag).map(|(r, d)| r / d).collect();
                conjugate_gradient(
                    |v, out| self.apply_shifted(v, out),
                    diag,
                    &rhs,
                    &mut x,
                    INNER_TOL,
                    20 * rhs.len() + 100,
                )?;
                b.copy_from_slice(&x);
                Ok(())
            }
        }
    }

    fn apply_shifted_power(&self, v: &mut Vec<f64>) {
        let mut tmp = vec![0.0; v.len()];
        for _ in 0..self.half_power() {
            self.apply_shifted(v, &mut tmp);
            std::mem::swap(v, &mut tmp);
        }
    }

    fn solve_shifted_power(&self, v: &mut [f64]) -> Result<()> {
        for _ in 0..self.half_power() {
            self.solve_shifted(v)?;
        }
        Ok(())
    }

    /// `A v = σ^{-1} Γ^{d/4−α/2} (P+Γ)^{α/2} v`.
    pub fn apply_a(&self, v: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        self.apply_shifted_power(&mut w);
        for (wi, s) in w.iter_mut().zip(&self.scale) {
            *wi *= s / self.sigma;
        }
        w
    }

    /// `Aᵀ v = σ^{-1} (P+Γ)^{α/2} Γ^{d/4−α/2} v`.
    pub fn apply_a_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut w: Vec<f64> = v.iter().zip(&self.scale).map(|(vi, s)| vi * s / self.sigma).collect();
        self.apply_shifted_power(&mut w);
        w
    }

    fn raw_solve_a(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut w: Vec<f64> = b.iter().zip(&self.scale).map(|(bi, s)| bi * self.sigma / s).collect();
        self.solve_shifted_power(&mut w)?;
        Ok(w)
    }

    fn raw_solve_a_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut w = b.to_vec();
        self.solve_shifted_power(&mut w)?;
        for (wi, s) in w.iter_mut().zip(&self.scale) {
            *wi *= self.sigma / s;
        }
        Ok(w)
    }

    /// Solves `A x = b` to relative residual `1e-10`, refining if needed.
    pub fn solve_a(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refined_solve(b, |r| self.raw_solve_a(r), |x| self.apply_a(x))
    }

    /// Solves `Aᵀ x = b` to relative residual `1e-10`.
    pub fn solve_a_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refined_solve(b, |r| self.raw_solve_a_transpose(r), |x| self.apply_a_transpose(x))
    }

    fn refined_solve(
        &self,
        b: &[f64],
        solve: impl Fn(&[f64]) -> Result<Vec<f64>>,
        apply: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Vec<f64>> {
        let b_norm = norm(b);
        let mut x = solve(b)?;
        if b_norm == 0.0 {
            return Ok(x);
        }
        for pass in 0..=REFINEMENTS {
            let ax = apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let res = norm(&r) / b_norm;
            if res <= OUTER_TOL {
                return Ok(x);
            }
            if pass == REFINEMENTS {
                return Err(Error::SolverDivergence { residual: res, iterations: pass });
            }
            let dx = solve(&r)?;
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        unreachable!()
    }

    /// Dense `A`, for verification on small grids.
    pub fn dense_a(&self) -> DMatrix<f64> {
        let m = self.len();
        let mut a = DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            a.set_column(j, &DVector::from_vec(self.apply_a(&e)));
            e[j] = 0.0;
        }
        a
    }
}

/// Draws `v` solving `A(u) v = ξ` with `ξ_i ~ N(0, 1/cell_volume)` i.i.d.
pub fn sample_spde<N: NoiseSource + ?Sized>(op: &PrecisionOperator, noise: &mut N) -> Result<FieldVector> {
    let scale = 1.0 / op.grid.cell_volume().sqrt();
    let mut xi = vec![0.0; op.len()];
    noise.fill_normal(&mut xi);
    xi.iter_mut().for_each(|v| *v *= scale);
    Ok(FieldVector::from_vec(op.solve_a(&xi)?))
}

/// Monte-Carlo mean of the spatial average of `u²` over `pilot` draws with
/// constant `Γ ≡ base_gamma²`. Draw `k` uses stream `(seed, k)`.
pub fn pilot_second_moment(
    grid: &Grid,
    base_gamma: f64,
    alpha: u32,
    sigma: f64,
    pilot: usize,
    seed: u64,
) -> Result<f64> {
    let gamma = FieldVector::from_element(grid.len(), base_gamma * base_gamma);
    let op = assemble_precision_from_gamma(grid, gamma, alpha, sigma)?;
    let moments: Vec<f64> = (0..pilot as u64)
        .into_par_iter()
        .map(|k| sample_spde(&op, &mut stream(seed, k)).map(|v| v.norm_squared() / v.len() as f64))
        .collect::<Result<_>>()?;
    Ok(moments.iter().sum::<f64>() / pilot as f64)
}

/// Chooses `σ` so that the base layer `Γ ≡ base_gamma²` has unit mean
/// pointwise second moment on `grid`, estimated from `pilot` draws.
pub fn calibrate_sigma(
    grid: &Grid,
    base_gamma: f64,
    alpha: u32,
    pilot: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    if pilot < 100 {
        return Err(Error::invalid(format!("calibration needs at least 100 pilot draws, got {pilot}")));
    }
    let seed = rng.next_u64();
    let m2 = pilot_second_moment(grid, base_gamma, alpha, 1.0, pilot, seed)?;
    Ok(1.0 / m2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CholeskyFactor;

    fn grid(n: usize) -> Grid {
        Grid::cell_centred(1, n).unwrap()
    }

    #[test]
    fn laplacian_is_symmetric_with_zero_row_sums() {
        for g in [grid(7), Grid::cell_centred(2, 4).unwrap()] {
            let p = NeumannLaplacian::new(&g).unwrap().dense();
            assert!((&p - p.transpose()).amax() == 0.0);
            for i in 0..p.nrows() {
                assert!(p.row(i).sum().abs() < 1e-9);
            }
        }
        assert!(NeumannLaplacian::new(&Grid::new(1, 5, Layout::Nodal).unwrap()).is_err());
    }

    #[test]
    fn rejects_odd_alpha_and_nonpositive_gamma() {
        let g = grid(5);
        assert!(assemble_precision(&g, &FieldVector::zeros(5), &LengthScaleMap::Square, 4, 1.0).is_err());
        assert!(assemble_precision(&g, &FieldVector::from_element(5, 1.0), &LengthScaleMap::Square, 3, 1.0).is_err());
        assert!(assemble_precision(&g, &FieldVector::from_element(5, 1.0), &LengthScaleMap::Square, 4, 1.0).is_ok());
    }

    #[test]
    fn constant_gamma_operator_is_symmetric_and_matches_formula() {
        let g = grid(20);
        let tau2: f64 = 30.0;
        let sigma = 1.7;
        let op = assemble_precision_from_gamma(&g, FieldVector::from_element(20, tau2), 4, sigma).unwrap();
        let a = op.dense_a();
        assert!((&a - a.transpose()).amax() < 1e-10 * a.amax());
        let p = op.laplacian().dense();
        let shifted = &p + DMatrix::<f64>::identity(20, 20) * tau2;
        let expected = &shifted * &shifted * (tau2.powf(0.25 - 2.0) / sigma);
        assert!((&a - expected).amax() < 1e-10 * a.amax());
        let v: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
        let av = op.apply_a(&v);
        let atv = op.apply_a_transpose(&v);
        let diff = av.iter().zip(&atv).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10 * norm(&av));
    }

    #[test]
    fn variable_gamma_transpose_and_solves() {
        let g = grid(20);
        let u = FieldVector::from_fn(20, |i, _| (i as f64 * 0.4).sin());
        let op = assemble_precision(&g, &u, &LengthScaleMap::clamped_exp_1d(), 4, 2.0).unwrap();
        let a = op.dense_a();
        let v: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let at_dense = a.transpose() * DVector::from_vec(v.clone());
        let at = op.apply_a_transpose(&v);
        for (x, y) in at.iter().zip(at_dense.iter()) {
            assert!((x - y).abs() < 1e-10 * at_dense.amax());
        }
        let x = op.solve_a(&v).unwrap();
        assert!((&a * DVector::from_vec(x) - DVector::from_vec(v.clone())).norm() < 1e-10 * norm(&v));
        let y = op.solve_a_transpose(&v).unwrap();
        assert!((a.transpose() * DVector::from_vec(y) - DVector::from_vec(v.clone())).norm() < 1e-10 * norm(&v));
        let prec = a.transpose() * &a;
        assert!((&prec - prec.transpose()).amax() < 1e-10 * prec.amax());
        assert!(CholeskyFactor::new_strict(&prec).is_ok());
    }

    #[test]
    fn two_d_solver_matches_dense() {
        let g = Grid::cell_centred(2, 6).unwrap();
        let u = FieldVector::from_fn(36, |i, _| 0.1 * i as f64 - 1.0);
        let op = assemble_precision(&g, &u, &LengthScaleMap::clamped_exp_2d(), 4, 1.0).unwrap();
        let a = op.dense_a();
        let b: Vec<f64> = (0..36).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let x = op.solve_a(&b).unwrap();
        let r = &a * DVector::from_vec(x) - DVector::from_vec(b.clone());
        assert!(r.norm() <= 1e-10 * norm(&b));
    }

    #[test]
    fn large_gamma_gives_nearly_white_samples() {
        let g = grid(20);
        let tau2 = 1e8;
        let sigma = 1.3;
        let op = assemble_precision_from_gamma(&g, FieldVector::from_element(20, tau2), 4, sigma).unwrap();
        let a = op.dense_a();
        let cov = (a.transpose() * &a).try_inverse().unwrap() / g.cell_volume();
        let white = sigma * sigma * tau2.powf(-0.5) / g.cell_volume();
        for i in 0..20 {
            assert!((cov[(i, i)] / white - 1.0).abs() < 1e-3);
        }
        let mut rng = stream(4, 0);
        let m = 4000;
        let mut acc = vec![0.0; 20];
        for _ in 0..m {
            let v = sample_spde(&op, &mut rng).unwrap();
            for i in 0..20 {
                acc[i] += v[i] * v[i] / m as f64;
            }
        }
        let mean_ratio = acc.iter().sum::<f64>() / 20.0 / white;
        assert!((mean_ratio - 1.0).abs() < 0.05, "{mean_ratio}");
    }

    #[test]
    fn samples_match_dense_covariance() {
        let g = grid(20);
        let u = FieldVector::from_fn(20, |i, _| 0.5 * (i as f64 * 0.3).cos());
        let op = assemble_precision(&g, &u, &LengthScaleMap::clamped_exp_1d(), 4, 2.5).unwrap();
        let a = op.dense_a();
        let cov = (a.transpose() * &a).try_inverse().unwrap() / g.cell_volume();
        let mut rng = stream(8, 1);
        let m = 20_000;
        let mut emp = DMatrix::<f64>::zeros(20, 20);
        for _ in 0..m {
            let v = sample_spde(&op, &mut rng).unwrap();
            emp += &v * v.transpose();
        }
        emp /= m as f64;
        for i in 0..20 {
            let se = cov[(i, i)] * (2.0 / m as f64).sqrt();
            assert!((emp[(i, i)] - cov[(i, i)]).abs() < 4.0 * se);
        }
    }

    #[test]
    fn white_noise_variance_follows_cell_volume() {
        let coarse = grid(100);
        let fine = grid(200);
        assert!((fine.cell_volume() * 2.0 - coarse.cell_volume()).abs() < 1e-15);
        let op_c = assemble_precision_from_gamma(&coarse, FieldVector::from_element(100, 400.0), 4, 1.0).unwrap();
        let op_f = assemble_precision_from_gamma(&fine, FieldVector::from_element(200, 400.0), 4, 1.0).unwrap();
        let var = |op: &PrecisionOperator, x: f64| {
            let a = op.dense_a();
            let cov = (a.transpose() * &a).try_inverse().unwrap() / op.grid().cell_volume();
            cov[(op.grid().nearest_node(&[x]), op.grid().nearest_node(&[x]))]
        };
        for x in [0.2, 0.5] {
            let (vc, vf) = (var(&op_c, x), var(&op_f, x));
            assert!((vc / vf - 1.0).abs() < 0.1, "{vc} {vf}");
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let g = grid(30);
        let op = assemble_precision_from_gamma(&g, FieldVector::from_element(30, 400.0), 4, 1.0).unwrap();
        let a = sample_spde(&op, &mut stream(1, 1)).unwrap();
        let b = sample_spde(&op, &mut stream(1, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn second_moment_scales_quadratically_in_sigma() {
        let g = grid(50);
        let m1 = pilot_second_moment(&g, 20.0, 4, 1.0, 100, 3).unwrap();
        let m2 = pilot_second_moment(&g, 20.0, 4, 2.0, 100, 3).unwrap();
        assert!((m2 / m1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_reproduces_unit_variance_on_independent_pilot() {
        let g = grid(200);
        let sigma = calibrate_sigma(&g, DEFAULT_BASE_GAMMA, 4, 400, &mut stream(21, 0)).unwrap();
        let check = pilot_second_moment(&g, DEFAULT_BASE_GAMMA, 4, sigma, 400, 9_999).unwrap();
        assert!((check - 1.0).abs() < 0.1, "{check}");
    }

    #[test]
    fn calibration_is_mesh_consistent() {
        let s100 = calibrate_sigma(&grid(100), DEFAULT_BASE_GAMMA, 4, 1000, &mut stream(5, 0)).unwrap();
        let s200 = calibrate_sigma(&grid(200), DEFAULT_BASE_GAMMA, 4, 1000, &mut stream(6, 0)).unwrap();
        assert!((s100 / s200 - 1.0).abs() < 0.05, "{s100} {s200}");
    }

    #[test]
    fn calibrated_base_layer_has_unit_second_moment() {
        let g = grid(200);
        let sigma = calibrate_sigma(&g, DEFAULT_BASE_GAMMA, 4, 200, &mut stream(2, 0)).unwrap();
        let m2 = pilot_second_moment(&g, DEFAULT_BASE_GAMMA, 4, sigma, 1000, 77).unwrap();
        assert!((0.8..=1.2).contains(&m2), "{m2}");
    }

    #[test]
    fn higher_gamma_shortens_correlation_length() {
        let g = grid(200);
        let lag_corr = |tau: f64| {
            let op =
                assemble_precision_from_gamma(&g, FieldVector::from_element(200, tau * tau), 4, 1.0).unwrap();
            let mut rng = stream(31, tau as u64);
            let (mut c, mut v) = (0.0, 0.0);
            for _ in 0..200 {
                let s = sample_spde(&op, &mut rng).unwrap();
                for i in 50..150 {
                    c += s[i] * s[i + 3];
                    v += s[i] * s[i];
                }
            }
            c / v
        };
        assert!(lag_corr(150.0) < lag_corr(50.0));
    }
}
