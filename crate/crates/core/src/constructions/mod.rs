//! The four layered constructions `u_{n+1} = L(u_n) ξ_{n+1}` and chain runners.

mod composition;
mod convolution;
pub mod io;

pub use composition::{TAYLOR_ORDER, TAYLOR_RADIUS};
pub use convolution::{periodic_convolve, step_coefficients, PeriodicTransform};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    assemble_precision, assemble_precision_from_gamma, calibrate_sigma, sample_dense, sample_spde, sample_spectral,
    SpectralCovariance, DEFAULT_BASE_GAMMA,
};
use crate::grid::{FieldVector, Grid, Layout};
use crate::kernels::{build_correlation_matrix, stationary_correlation_matrix, IsotropicKernel, LengthScaleMap};
use crate::random::{stream, NoiseSource, RandomStream, Recorder, Replay};

/// Stream index reserved for σ calibration of covariance-operator chains.
const CALIBRATION_STREAM: u64 = u64::MAX - 1;

fn default_pilot() -> usize {
    200
}

fn default_base_gamma() -> f64 {
    DEFAULT_BASE_GAMMA
}

/// Construction-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    Composition {
        kernel: IsotropicKernel,
        width: usize,
        #[serde(default)]
        connect_input: bool,
    },
    CovFunction {
        base: IsotropicKernel,
        length_scale: LengthScaleMap,
    },
    CovOperator {
        length_scale: LengthScaleMap,
        alpha: u32,
        /// Amplitude; calibrated from the base layer when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
        #[serde(default = "default_base_gamma")]
        base_gamma: f64,
        #[serde(default = "default_pilot")]
        calibration_pilot: usize,
    },
    Convolution {
        covariance: SpectralCovariance,
    },
}

impl Construction {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match self {
            Construction::Composition { kernel, width, .. } => {
                kernel.validate()?;
                if *width == 0 {
                    return Err(Error::Config("composition width must be at least 1".into()));
                }
            }
            Construction::CovFunction { base, length_scale } => {
                length_scale.validate()?;
                if !base.is_correlation() {
                    return Err(Error::Config("covariance-function base must be a correlation kernel".into()));
                }
            }
            Construction::CovOperator { length_scale, alpha, sigma, base_gamma, calibration_pilot } => {
                length_scale.validate()?;
                if *alpha == 0 || alpha % 2 != 0 {
                    return Err(Error::Config(format!("alpha must be a positive even integer, got {alpha}")));
                }
                if let Some(s) = sigma {
                    if !(*s > 0.0) {
                        return Err(Error::Config("sigma must be positive".into()));
                    }
                }
                if !(*base_gamma > 0.0) {
                    return Err(Error::Config("base_gamma must be positive".into()));
                }
                if sigma.is_none() && *calibration_pilot < 100 {
                    return Err(Error::Config("calibration_pilot must be at least 100".into()));
                }
                if grid.layout() != Layout::CellCentred {
                    return Err(Error::Config("covariance-operator chains need a cell-centred grid".into()));
                }
            }
            Construction::Convolution { covariance } => {
                covariance.validate()?;
                if grid.layout() != Layout::Periodic || grid.dim() != 1 {
                    return Err(Error::Config("convolution chains need a one-dimensional periodic grid".into()));
                }
            }
        }
        Ok(())
    }
}

/// A chain: construction, grid, depth and master seed.
#[derive(Clone, Debug)]
pub struct DeepChainConfig {
    pub construction: Construction,
    pub grid: Grid,
    pub depth: usize,
    pub seed: u64,
}

impl DeepChainConfig {
    pub fn new(construction: Construction, grid: Grid, depth: usize, seed: u64) -> Result<Self> {
        construction.validate(&grid)?;
        Ok(Self { construction, grid, depth, seed })
    }

    /// Fills in a calibrated σ for covariance-operator chains that lack one.
    /// Uses a stream reserved for calibration, so the result depends only on the seed.
    pub fn resolve(&self) -> Result<Self> {
        let mut out = self.clone();
        if let Construction::CovOperator { alpha, sigma, base_gamma, calibration_pilot, .. } = &mut out.construction {
            if sigma.is_none() {
                let mut rng = stream(self.seed, CALIBRATION_STREAM);
                *sigma = Some(calibrate_sigma(&self.grid, *base_gamma, *alpha, *calibration_pilot, &mut rng)?);
            }
        }
        Ok(out)
    }
}

/// One layer: `values = offset + deviation`, shape `N × m`.
///
/// Scalar layers have `m = 1` and zero offset. Composition layers keep the
/// common level in `offset` so that tiny spreads are represented exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub offset: Vec<f64>,
    pub deviation: DMatrix<f64>,
}

impl Layer {
    pub fn scalar(u: FieldVector) -> Self {
        let n = u.len();
        Self { offset: vec![0.0], deviation: DMatrix::from_column_slice(n, 1, u.as_slice()) }
    }

    pub fn from_values(values: DMatrix<f64>) -> Self {
        let m = values.ncols();
        Self { offset: vec![0.0; m], deviation: values }
    }

    pub fn len(&self) -> usize {
        self.deviation.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.deviation.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.deviation.ncols()
    }

    pub fn values(&self) -> DMatrix<f64> {
        let mut v = self.deviation.clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col.iter_mut().for_each(|x| *x += self.offset[j]);
        }
        v
    }

    /// First component as a grid function.
    pub fn scalar_values(&self) -> FieldVector {
        self.deviation.column(0).map(|x| x + self.offset[0])
    }

    /// Mean over pairs `i < j` of `‖u(x_i) − u(x_j)‖²`.
    pub fn mean_square_spread(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for col in self.deviation.column_iter() {
            let mean = col.mean();
            total += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        }
        2.0 * total / (n - 1) as f64
    }

    /// `max_{i,j} ‖u(x_i) − u(x_j)‖`.
    pub fn max_spread(&self) -> f64 {
        let n = self.len();
        if self.width() == 1 {
            let col = self.deviation.column(0);
            return col.max() - col.min();
        }
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max((self.deviation.row(i) - self.deviation.row(j)).norm());
            }
        }
        best
    }

    /// Discrete L² norm over the grid, `(Σ_i ‖u(x_i)‖² h^d)^{1/2}`.
    pub fn l2_norm(&self, cell_volume: f64) -> f64 {
        (self.values().norm_squared() * cell_volume).sqrt()
    }
}

/// Per-layer summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub norm: f64,
    pub mean_square_spread: f64,
    pub max_spread: f64,
}

/// Output of [`run_chain`]: `depth + 1` layers starting from the supplied `u_0`.
#[derive(Clone, Debug)]
pub struct ChainTrajectory {
    pub layers: Vec<Layer>,
    pub stats: Vec<LayerStats>,
    /// Convolution chains: Fourier coefficients of every layer in FFT bin order.
    pub coefficients: Option<Vec<Vec<Complex64>>>,
}

impl ChainTrajectory {
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Moduli `|û_n(k)|` per layer, for convolution chains.
    pub fn coefficient_moduli(&self) -> Option<Vec<Vec<f64>>> {
        self.coefficients.as_ref().map(|c| c.iter().map(|l| l.iter().map(|z| z.norm()).collect()).collect())
    }
}

fn stats_for(layer: &Layer, grid: &Grid) -> LayerStats {
    LayerStats {
        norm: layer.l2_norm(grid.cell_volume()),
        mean_square_spread: layer.mean_square_spread(),
        max_spread: layer.max_spread(),
    }
}

/// Draws the default initial layer of a chain:
/// a GP with kernel `h` on the inputs (composition), a stationary field with
/// unit length scale (covariance function), the base layer `Γ ≡ base_gamma²`
/// (covariance operator), or a sample of the spectral field (convolution).
pub fn initial_layer<N: NoiseSource + ?Sized>(cfg: &DeepChainConfig, noise: &mut N) -> Result<Layer> {
    let grid = &cfg.grid;
    match &cfg.construction {
        Construction::Composition { kernel, width, .. } => {
            let n = grid.len();
            let kmat = DMatrix::from_fn(n, n, |i, j| kernel.eval_sq(grid.points().sq_dist(i, j)));
            let factor = crate::linalg::CholeskyFactor::new_with_jitter(&kmat)?;
            let mut values = DMatrix::zeros(n, *width);
            for j in 0..*width {
                values.set_column(j, &crate::fields::sample_dense_with_factor(&factor, noise));
            }
            Ok(Layer::from_values(values))
        }
        Construction::CovFunction { base, .. } => {
            let r = stationary_correlation_matrix(grid.points(), base)?;
            Ok(Layer::scalar(sample_dense(&r, noise)?))
        }
        Construction::CovOperator { alpha, sigma, base_gamma, .. } => {
            let sigma = sigma.ok_or_else(|| Error::invalid("sigma unresolved; call DeepChainConfig::resolve"))?;
            let gamma = FieldVector::from_element(grid.len(), base_gamma * base_gamma);
            let op = assemble_precision_from_gamma(grid, gamma, *alpha, sigma)?;
            Ok(Layer::scalar(sample_spde(&op, noise)?))
        }
        Construction::Convolution { covariance } => {
            let s = sample_spectral(covariance, grid.points(), noise)?;
            Ok(Layer::scalar(FieldVector::from_vec(s.real_values())))
        }
    }
}

/// Composition step; `u` may be vector-valued.
pub fn step_composition<N: NoiseSource + ?Sized>(
    u: &Layer,
    cfg: &DeepChainConfig,
    noise: &mut N,
) -> Result<Layer> {
    match &cfg.construction {
        Construction::Composition { kernel, width, connect_input } => {
            composition::step(u, kernel, *width, *connect_input, cfg.grid.points(), noise)
        }
        _ => Err(Error::invalid("step_composition needs a composition config")),
    }
}

/// Covariance-function step: `u_{n+1} ~ N(0, R(u_n))`.
pub fn step_covfun<N: NoiseSource + ?Sized>(
    u: &FieldVector,
    cfg: &DeepChainConfig,
    noise: &mut N,
) -> Result<FieldVector> {
    match &cfg.construction {
        Construction::CovFunction { base, length_scale } => {
            let r = build_correlation_matrix(cfg.grid.points(), u, length_scale, base)?;
            sample_dense(&r, noise)
        }
        _ => Err(Error::invalid("step_covfun needs a covariance-function config")),
    }
}

/// Covariance-operator step: solve `A(u_n) u_{n+1} = ξ`.
pub fn step_covop<N: NoiseSource + ?Sized>(
    u: &FieldVector,
    cfg: &DeepChainConfig,
    noise: &mut N,
) -> Result<FieldVector> {
    match &cfg.construction {
        Construction::CovOperator { length_scale, alpha, sigma, .. } => {
            let sigma = sigma.ok_or_else(|| Error::invalid("sigma unresolved; call DeepChainConfig::resolve"))?;
            let op = assemble_precision(&cfg.grid, u, length_scale, *alpha, sigma)?;
            sample_spde(&op, noise)
        }
        _ => Err(Error::invalid("step_covop needs a covariance-operator config")),
    }
}

/// Convolution step on grid values; returns the new values and their coefficients.
pub fn step_convolution<N: NoiseSource + ?Sized>(
    u: &[Complex64],
    cfg: &DeepChainConfig,
    noise: &mut N,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    match &cfg.construction {
        Construction::Convolution { covariance } => {
            let t = PeriodicTransform::new(cfg.grid.len());
            let coeffs = step_coefficients(&t.forward(u), covariance, &t, noise);
            Ok((t.inverse(&coeffs), coeffs))
        }
        _ => Err(Error::invalid("step_convolution needs a convolution config")),
    }
}

/// Runs `depth` steps from `u0`. `u0` is stored untouched as `layers[0]`.
pub fn run_chain<N: NoiseSource + ?Sized>(cfg: &DeepChainConfig, u0: &Layer, noise: &mut N) -> Result<ChainTrajectory> {
    run_chain_inner(cfg, u0, noise, |_, _| {})
}

fn run_chain_inner<N: NoiseSource + ?Sized>(
    cfg: &DeepChainConfig,
    u0: &Layer,
    noise: &mut N,
    mut after_step: impl FnMut(usize, &mut N),
) -> Result<ChainTrajectory> {
    cfg.construction.validate(&cfg.grid)?;
    if u0.len() != cfg.grid.len() {
        return Err(Error::invalid(format!("initial layer has {} nodes, grid has {}", u0.len(), cfg.grid.len())));
    }
    let mut layers = vec![u0.clone()];
    let mut stats = vec![stats_for(u0, &cfg.grid)];
    let mut coefficients = None;
    let transform = match cfg.construction {
        Construction::Convolution { .. } => Some(PeriodicTransform::new(cfg.grid.len())),
        _ => None,
    };
    if let (Some(t), Construction::Convolution { covariance }) = (&transform, &cfg.construction) {
        let mut record = vec![t.forward_real(u0.scalar_values().as_slice())];
        for n in 0..cfg.depth {
            let next = step_coefficients(&record[n], covariance, t, noise);
            let values: Vec<f64> = t.inverse(&next).iter().map(|z| z.re).collect();
            let layer = Layer::scalar(FieldVector::from_vec(values));
            stats.push(stats_for(&layer, &cfg.grid));
            layers.push(layer);
            record.push(next);
            after_step(n, noise);
        }
        coefficients = Some(record);
    } else {
        for n in 0..cfg.depth {
            let current = &layers[n];
            let next = match &cfg.construction {
                Construction::Composition { .. } => step_composition(current, cfg, noise)?,
                Construction::CovFunction { .. } => Layer::scalar(step_covfun(&current.scalar_values(), cfg, noise)?),
                Construction::CovOperator { .. } => Layer::scalar(step_covop(&current.scalar_values(), cfg, noise)?),
                Construction::Convolution { .. } => unreachable!(),
            };
            stats.push(stats_for(&next, &cfg.grid));
            layers.push(next);
            after_step(n, noise);
        }
    }
    Ok(ChainTrajectory { layers, stats, coefficients })
}

/// Runs a chain and returns the standard normals consumed by each step.
pub fn run_chain_recorded(
    cfg: &DeepChainConfig,
    u0: &Layer,
    rng: &mut RandomStream,
) -> Result<(ChainTrajectory, Vec<Vec<f64>>)> {
    let mut rec = Recorder::new(rng);
    let mut per_step = Vec::with_capacity(cfg.depth);
    let traj = run_chain_inner(cfg, u0, &mut rec, |_, r| per_step.push(r.take()))?;
    Ok((traj, per_step))
}

/// Recomputes a chain from recorded per-step noise.
pub fn replay_chain(cfg: &DeepChainConfig, u0: &Layer, noise: &[Vec<f64>]) -> Result<ChainTrajectory> {
    if noise.len() != cfg.depth {
        return Err(Error::invalid("recorded noise does not match the chain depth"));
    }
    let flat: Vec<f64> = noise.iter().flatten().copied().collect();
    let mut replay = Replay::new(&flat);
    let traj = run_chain(cfg, u0, &mut replay)?;
    if replay.consumed() != flat.len() {
        return Err(Error::invalid("replay consumed fewer draws than were recorded"));
    }
    Ok(traj)
}

/// Initial-layer rule for ensembles.
#[derive(Clone, Debug)]
pub enum InitialState {
    /// Every replica starts from this layer.
    Fixed(Layer),
    /// Each replica draws its own [`initial_layer`].
    Prior,
}

/// Runs `replicas` independent chains; replica `r` uses stream `(seed, r)`.
/// Output order and values do not depend on thread scheduling.
pub fn run_ensemble(
    cfg: &DeepChainConfig,
    init: &InitialState,
    replicas: usize,
    seed: u64,
) -> Result<Vec<ChainTrajectory>> {
    let cfg = cfg.resolve()?;
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let u0 = match init {
                InitialState::Fixed(l) => l.clone(),
                InitialState::Prior => initial_layer(&cfg, &mut rng)?,
            };
            run_chain(&cfg, &u0, &mut rng)
        })
        .collect()
}
