//! Deep priors in whitened coordinates and the Gaussian top-layer calculus.

use nalgebra::{DMatrix, DVector};

use super::observation::Dataset;
use crate::constructions::{Construction, DeepChainConfig};
use crate::error::{Error, Result};
use crate::fields::{assemble_precision, assemble_precision_from_gamma, PrecisionOperator};
use crate::grid::{FieldVector, Grid};
use crate::kernels::{build_correlation_matrix, stationary_correlation_matrix, IsotropicKernel, LengthScaleMap};
use crate::linalg::{symmetrize, CholeskyFactor};
use crate::random::NoiseSource;

#[derive(Clone, Debug)]
enum Family {
    CovFunction { base: IsotropicKernel, length_scale: LengthScaleMap, base_r: DMatrix<f64>, base_factor: CholeskyFactor },
    CovOperator { length_scale: LengthScaleMap, alpha: u32, sigma: f64, base_op: PrecisionOperator },
}

/// A covariance-function or covariance-operator hierarchy on one grid.
///
/// Whitened coordinates: `ξ_0 = u_0` is a draw of the base layer, and every
/// later `ξ_k` is a vector of i.i.d. standard normals with
/// `u_k = L(u_{k−1}) ξ_k`.
#[derive(Clone, Debug)]
pub struct DeepPrior {
    grid: Grid,
    construction: Construction,
    family: Family,
}

impl DeepPrior {
    /// Builds the prior, calibrating σ from `seed` when the construction leaves it open.
    pub fn new(construction: Construction, grid: Grid, seed: u64) -> Result<Self> {
        let cfg = DeepChainConfig::new(construction, grid.clone(), 1, seed)?.resolve()?;
        let family = match &cfg.construction {
            Construction::CovFunction { base, length_scale } => {
                let r = stationary_correlation_matrix(grid.points(), base)?;
                Family::CovFunction {
                    base: *base,
                    length_scale: *length_scale,
                    base_factor: CholeskyFactor::new_with_jitter(r.entries())?,
                    base_r: r.into_entries(),
                }
            }
            Construction::CovOperator { length_scale, alpha, sigma, base_gamma, .. } => {
                let sigma = sigma.expect("resolved");
                let gamma = FieldVector::from_element(grid.len(), base_gamma * base_gamma);
                Family::CovOperator {
                    length_scale: *length_scale,
                    alpha: *alpha,
                    sigma,
                    base_op: assemble_precision_from_gamma(&grid, gamma, *alpha, sigma)?,
                }
            }
            _ => {
                return Err(Error::Config(
                    "inference supports the covariance-function and covariance-operator constructions".into(),
                ))
            }
        };
        Ok(Self { grid, construction: cfg.construction, family })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The construction with any calibrated σ filled in.
    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    pub fn length_scale(&self) -> &LengthScaleMap {
        match &self.family {
            Family::CovFunction { length_scale, .. } | Family::CovOperator { length_scale, .. } => length_scale,
        }
    }

    /// `F(u)^{1/2}` pointwise.
    pub fn length_scale_sqrt(&self, u: &FieldVector) -> FieldVector {
        self.length_scale().apply_field(u).map(f64::sqrt)
    }

    /// Draws `ξ_0 ~ N(0, C_0)`.
    pub fn sample_base<N: NoiseSource + ?Sized>(&self, noise: &mut N) -> Result<FieldVector> {
        match &self.family {
            Family::CovFunction { base_factor, .. } => Ok(crate::fields::sample_dense_with_factor(base_factor, noise)),
            Family::CovOperator { base_op, .. } => crate::fields::sample_spde(base_op, noise),
        }
    }

    /// Draws a white coordinate `ξ_k`, `k ≥ 1`.
    pub fn sample_white<N: NoiseSource + ?Sized>(&self, noise: &mut N) -> FieldVector {
        let mut z = FieldVector::zeros(self.grid.len());
        noise.fill_normal(z.as_mut_slice());
        z
    }

    /// `L(u_prev) z`.
    pub fn layer_map(&self, u_prev: &FieldVector, z: &FieldVector) -> Result<FieldVector> {
        match &self.family {
            Family::CovFunction { base, length_scale, .. } => {
                let r = build_correlation_matrix(self.grid.points(), u_prev, length_scale, base)?;
                Ok(CholeskyFactor::new_with_jitter(r.entries())?.mul_l(z))
            }
            Family::CovOperator { length_scale, alpha, sigma, .. } => {
                let op = assemble_precision(&self.grid, u_prev, length_scale, *alpha, *sigma)?;
                let scale = 1.0 / self.grid.cell_volume().sqrt();
                let rhs: Vec<f64> = z.iter().map(|v| v * scale).collect();
                Ok(FieldVector::from_vec(op.solve_a(&rhs)?))
            }
        }
    }

    /// The map `T`: `u_0 = ξ_0`, `u_k = L(u_{k−1}) ξ_k`.
    pub fn whiten_forward(&self, xi: &[FieldVector]) -> Result<Vec<FieldVector>> {
        let mut u: Vec<FieldVector> = Vec::with_capacity(xi.len());
        for (k, x) in xi.iter().enumerate() {
            if x.len() != self.grid.len() {
                return Err(Error::invalid(format!("layer {k} has {} values for {} nodes", x.len(), self.grid.len())));
            }
            let next = if k == 0 { x.clone() } else { self.layer_map(&u[k - 1], x)? };
            u.push(next);
        }
        Ok(u)
    }

    /// Covariance of the layer following `hyper` (the base covariance when `hyper` is empty),
    /// together with its image under the observation operator.
    pub fn top_covariance(&self, hyper: &[FieldVector], data: &Dataset) -> Result<TopCovariance> {
        if data.operator.n_nodes() != self.grid.len() {
            return Err(Error::invalid("dataset was built for a different grid"));
        }
        let obs = &data.operator;
        let (kind, cross, m) = match (&self.family, hyper.last()) {
            (Family::CovFunction { base_r, .. }, None) => self.dense_parts(base_r.clone(), obs),
            (Family::CovFunction { base, length_scale, .. }, Some(u)) => {
                let r = build_correlation_matrix(self.grid.points(), u, length_scale, base)?.into_entries();
                self.dense_parts(r, obs)
            }
            (Family::CovOperator { base_op, .. }, None) => self.operator_parts(base_op.clone(), obs)?,
            (Family::CovOperator { length_scale, alpha, sigma, .. }, Some(u)) => {
                let op = assemble_precision(&self.grid, u, length_scale, *alpha, *sigma)?;
                self.operator_parts(op, obs)?
            }
        };
        let noise_var = data.noise_std * data.noise_std;
        let mut m = symmetrize(&m);
        for j in 0..m.nrows() {
            m[(j, j)] += noise_var;
        }
        let m_factor = CholeskyFactor::new_strict(&m)?;
        Ok(TopCovariance { kind, cross, m_factor, noise_var })
    }

    fn dense_parts(
        &self,
        r: DMatrix<f64>,
        obs: &super::ObservationOperator,
    ) -> (TopKind, DMatrix<f64>, DMatrix<f64>) {
        let cross = obs.apply_matrix(&r).transpose();
        let m = obs.apply_matrix(&cross);
        (TopKind::Dense { r }, cross, m)
    }

    fn operator_parts(
        &self,
        op: PrecisionOperator,
        obs: &super::ObservationOperator,
    ) -> Result<(TopKind, DMatrix<f64>, DMatrix<f64>)> {
        let n = self.grid.len();
        let j = obs.n_obs();
        let mut b = DMatrix::zeros(n, j);
        for (c, row) in obs.rows().iter().enumerate() {
            let mut e = vec![0.0; n];
            for &(i, w) in row {
                e[i] += w;
            }
            let col = op.solve_a_transpose(&e)?;
            b.column_mut(c).copy_from_slice(&col);
        }
        let h = self.grid.cell_volume();
        let m = b.transpose() * &b / h;
        Ok((TopKind::Operator { op, cell_volume: h }, b, m))
    }
}

#[derive(Clone, Debug)]
enum TopKind {
    Dense { r: DMatrix<f64> },
    Operator { op: PrecisionOperator, cell_volume: f64 },
}

/// Top-layer prior covariance `C` seen through the data:
/// `M = A C Aᵀ + γ² I` and products with `C Aᵀ`.
///
/// For dense `C` the stored cross term is `C Aᵀ` itself; for
/// `C = A(u)^{-1} A(u)^{-T} / h` it is `B = A(u)^{-T} Aᵀ`, so that
/// `M = BᵀB / h` and `C Aᵀ w = A(u)^{-1} B w / h`.
#[derive(Clone, Debug)]
pub struct TopCovariance {
    kind: TopKind,
    cross: DMatrix<f64>,
    m_factor: CholeskyFactor,
    noise_var: f64,
}

impl TopCovariance {
    pub fn m_factor(&self) -> &CholeskyFactor {
        &self.m_factor
    }

    /// `M = A C Aᵀ + γ² I`.
    pub fn m(&self) -> DMatrix<f64> {
        self.m_factor.l() * self.m_factor.l().transpose()
    }

    /// `Ψ = ½ yᵀ M⁻¹ y + ½ log det M`.
    pub fn psi(&self, y: &DVector<f64>) -> f64 {
        let w = self.m_factor.solve_l(y);
        0.5 * w.norm_squared() + 0.5 * self.m_factor.log_det()
    }

    /// `C Aᵀ w`.
    pub fn apply_cross(&self, w: &DVector<f64>) -> Result<FieldVector> {
        let v = &self.cross * w;
        match &self.kind {
            TopKind::Dense { .. } => Ok(v),
            TopKind::Operator { op, cell_volume } => {
                let x = op.solve_a(v.as_slice())?;
                Ok(FieldVector::from_iterator(x.len(), x.into_iter().map(|t| t / cell_volume)))
            }
        }
    }

    /// Conditional mean `m_y = C Aᵀ M⁻¹ y`.
    pub fn posterior_mean(&self, y: &DVector<f64>) -> Result<FieldVector> {
        self.apply_cross(&self.m_factor.solve(y))
    }

    /// Draws `v ~ N(0, C)`.
    pub fn sample_prior<N: NoiseSource + ?Sized>(&self, noise: &mut N) -> Result<FieldVector> {
        match &self.kind {
            TopKind::Dense { r } => {
                Ok(crate::fields::sample_dense_with_factor(&CholeskyFactor::new_with_jitter(r)?, noise))
            }
            TopKind::Operator { op, .. } => crate::fields::sample_spde(op, noise),
        }
    }

    /// Draws from `N(m_y, C_y)` by conditioning a prior draw:
    /// `u = v + C Aᵀ M⁻¹ (y − A v − ε)`, `v ~ N(0, C)`, `ε ~ N(0, γ² I)`.
    pub fn sample_posterior<N: NoiseSource + ?Sized>(&self, data: &Dataset, noise: &mut N) -> Result<FieldVector> {
        let v = self.sample_prior(noise)?;
        let sd = self.noise_var.sqrt();
        let mut resid = &data.y - data.operator.apply(&v);
        for r in resid.iter_mut() {
            *r -= sd * noise.standard_normal();
        }
        Ok(v + self.apply_cross(&self.m_factor.solve(&resid))?)
    }

    /// Dense prior covariance `C`, for verification on small grids.
    pub fn prior_covariance(&self) -> DMatrix<f64> {
        match &self.kind {
            TopKind::Dense { r } => r.clone(),
            TopKind::Operator { op, cell_volume } => {
                let a_inv = op.dense_a().try_inverse().expect("A is invertible");
                &a_inv * a_inv.transpose() / *cell_volume
            }
        }
    }

    /// Dense `C_y = C − C Aᵀ M⁻¹ A C`, symmetrized.
    pub fn posterior_covariance(&self) -> Result<DMatrix<f64>> {
        let c = self.prior_covariance();
        let j = self.cross.ncols();
        let mut k = DMatrix::zeros(c.nrows(), j);
        for col in 0..j {
            let e = DVector::from_fn(j, |i, _| if i == col { 1.0 } else { 0.0 });
            k.set_column(col, &self.apply_cross(&e)?);
        }
        let mk = self.m_factor.solve_matrix(&k.transpose());
        Ok(symmetrize(&(c - &k * mk)))
    }
}

/// `Ψ(u_top; y)` for the layer following `u_top` (the base layer when `None`).
pub fn potential_psi(u_top: Option<&FieldVector>, data: &Dataset, prior: &DeepPrior) -> Result<f64> {
    let hyper: Vec<FieldVector> = u_top.into_iter().cloned().collect();
    Ok(prior.top_covariance(&hyper, data)?.psi(&data.y))
}

/// Gaussian conditional of the layer following `u_top` given the data: mean,
/// one draw, and the covariance factors for further queries.
pub fn gp_regress_top_layer<N: NoiseSource + ?Sized>(
    u_top: Option<&FieldVector>,
    data: &Dataset,
    prior: &DeepPrior,
    noise: &mut N,
) -> Result<(FieldVector, FieldVector, TopCovariance)> {
    let hyper: Vec<FieldVector> = u_top.into_iter().cloned().collect();
    let top = prior.top_covariance(&hyper, data)?;
    let mean = top.posterior_mean(&data.y)?;
    let draw = top.sample_posterior(data, noise)?;
    Ok((mean, draw, top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Layout, PointSet};
    use crate::inference::ObservationKind;
    use crate::random::stream;

    fn covfun_prior(n: usize) -> DeepPrior {
        DeepPrior::new(
            Construction::CovFunction {
                base: IsotropicKernel::GaussianCorrelation,
                length_scale: LengthScaleMap::clamped_exp_1d(),
            },
            Grid::new(1, n, Layout::Nodal).unwrap(),
            0,
        )
        .unwrap()
    }

    fn covop_prior(n: usize) -> DeepPrior {
        DeepPrior::new(
            Construction::CovOperator {
                length_scale: LengthScaleMap::clamped_exp_1d(),
                alpha: 4,
                sigma: Some(3.0),
                base_gamma: 20.0,
                calibration_pilot: 200,
            },
            Grid::cell_centred(1, n).unwrap(),
            0,
        )
        .unwrap()
    }

    fn dataset(prior: &DeepPrior, xs: &[f64], gamma: f64, seed: u64) -> Dataset {
        let mut rng = stream(seed, 0);
        let y = DVector::from_fn(xs.len(), |_, _| rng.standard_normal());
        Dataset::new(PointSet::from_1d(xs).unwrap(), y, gamma, prior.grid(), ObservationKind::Nearest).unwrap()
    }

    #[test]
    fn one_layer_forward_map_is_identity() {
        let prior = covop_prior(20);
        let xi = vec![prior.sample_base(&mut stream(1, 0)).unwrap()];
        assert_eq!(prior.whiten_forward(&xi).unwrap(), xi);
    }

    #[test]
    fn forward_map_is_deterministic() {
        let prior = covfun_prior(15);
        let mut rng = stream(4, 0);
        let xi = vec![prior.sample_base(&mut rng).unwrap(), prior.sample_white(&mut rng), prior.sample_white(&mut rng)];
        assert_eq!(prior.whiten_forward(&xi).unwrap(), prior.whiten_forward(&xi).unwrap());
    }

    #[test]
    fn pushforward_matches_direct_hierarchical_sampling() {
        let prior = covfun_prior(9);
        let cfg = DeepChainConfig::new(prior.construction().clone(), prior.grid().clone(), 1, 0).unwrap();
        let u0 = prior.sample_base(&mut stream(6, 0)).unwrap();
        let m = 1000;
        let mut via_t = Vec::new();
        let mut direct = Vec::new();
        for r in 0..m {
            let z = prior.sample_white(&mut stream(6, 1 + r));
            via_t.push(prior.whiten_forward(&[u0.clone(), z]).unwrap()[1][4]);
            direct.push(crate::constructions::step_covfun(&u0, &cfg, &mut stream(7, r)).unwrap()[4]);
        }
        let stats = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
            (mean, var)
        };
        let (ma, va) = stats(&via_t);
        let (mb, vb) = stats(&direct);
        let se_mean = ((va + vb) / m as f64).sqrt();
        assert!((ma - mb).abs() < 3.0 * se_mean);
        let se_var = (2.0 * (va * va + vb * vb) / (m - 1) as f64).sqrt();
        assert!((va - vb).abs() < 3.0 * se_var);
    }

    #[test]
    fn zero_covariance_gives_pure_noise_marginal() {
        let prior = covfun_prior(10);
        let data = dataset(&prior, &[0.2, 0.6], 0.5, 3);
        let top = TopCovariance {
            kind: TopKind::Dense { r: DMatrix::zeros(10, 10) },
            cross: DMatrix::zeros(10, 2),
            m_factor: CholeskyFactor::new_strict(&(DMatrix::identity(2, 2) * 0.25)).unwrap(),
            noise_var: 0.25,
        };
        let expected = 0.5 * data.y.norm_squared() / 0.25 + 2.0 * 0.5f64.ln();
        assert!((top.psi(&data.y) - expected).abs() < 1e-13);
    }

    #[test]
    fn psi_matches_explicit_two_by_two() {
        let prior = covfun_prior(12);
        let data = dataset(&prior, &[0.25, 0.7], 0.3, 9);
        let top = prior.top_covariance(&[], &data).unwrap();
        let c = top.prior_covariance();
        let a = data.operator.dense();
        let m = &a * c * a.transpose() + DMatrix::identity(2, 2) * 0.09;
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let (y0, y1) = (data.y[0], data.y[1]);
        let quad = (m[(1, 1)] * y0 * y0 - 2.0 * m[(0, 1)] * y0 * y1 + m[(0, 0)] * y1 * y1) / det;
        assert!((top.psi(&data.y) - (0.5 * quad + 0.5 * det.ln())).abs() < 1e-12);
    }

    #[test]
    fn operator_and_dense_views_agree() {
        let prior = covop_prior(30);
        let data = dataset(&prior, &[0.1, 0.45, 0.8], 0.05, 2);
        let u = prior.sample_base(&mut stream(3, 3)).unwrap();
        let top = prior.top_covariance(&[u], &data).unwrap();
        let c = top.prior_covariance();
        let a = data.operator.dense();
        let m = &a * &c * a.transpose() + DMatrix::identity(3, 3) * 0.0025;
        assert!((top.m() - &m).amax() < 1e-9 * m.amax());
        let w = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let direct = &c * a.transpose() * &w;
        assert!((top.apply_cross(&w).unwrap() - direct).amax() < 1e-9 * c.amax());
    }

    #[test]
    fn weak_data_leaves_prior_unchanged() {
        let prior = covop_prior(25);
        let data = dataset(&prior, &[0.3, 0.6], 1e6, 5);
        let top = prior.top_covariance(&[], &data).unwrap();
        let mean = top.posterior_mean(&data.y).unwrap();
        assert!(mean.amax() < 1e-9);
        let c = top.prior_covariance();
        assert!((top.posterior_covariance().unwrap() - &c).amax() < 1e-9 * c.amax());
    }

    #[test]
    fn noise_free_limit_interpolates() {
        for prior in [covfun_prior(40), covop_prior(40)] {
            let data = dataset(&prior, &[0.2, 0.5, 0.77], 1e-6, 11);
            let (mean, _, _) = gp_regress_top_layer(None, &data, &prior, &mut stream(0, 0)).unwrap();
            let at_obs = data.operator.apply(&mean);
            assert!((at_obs - &data.y).amax() < 1e-3);
        }
    }

    #[test]
    fn posterior_covariance_is_psd() {
        for seed in 0..5 {
            let prior = if seed % 2 == 0 { covfun_prior(14) } else { covop_prior(14) };
            let data = dataset(&prior, &[0.15, 0.4, 0.55, 0.9], 0.1, seed);
            let u = prior.sample_base(&mut stream(seed, 1)).unwrap();
            let top = prior.top_covariance(&[u], &data).unwrap();
            let cy = top.posterior_covariance().unwrap();
            let scale = top.prior_covariance().amax();
            assert!(cy.symmetric_eigenvalues().min() >= -1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn conditioned_draws_have_the_conditional_mean() {
        let prior = covop_prior(16);
        let data = dataset(&prior, &[0.3, 0.7], 0.2, 4);
        let top = prior.top_covariance(&[], &data).unwrap();
        let mean = top.posterior_mean(&data.y).unwrap();
        let cy = top.posterior_covariance().unwrap();
        let m = 4000;
        let mut acc = FieldVector::zeros(16);
        let mut rng = stream(12, 0);
        for _ in 0..m {
            acc += top.sample_posterior(&data, &mut rng).unwrap();
        }
        acc /= m as f64;
        for i in 0..16 {
            let se = (cy[(i, i)] / m as f64).sqrt();
            assert!((acc[i] - mean[i]).abs() < 4.0 * se, "node {i}");
        }
    }
}
