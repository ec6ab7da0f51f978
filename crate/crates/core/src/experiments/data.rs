//! Synthetic data: truths, observation layouts and noisy point values.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use super::spec::{square_side, ExperimentSpec, ObsLayout, Truth};
use crate::error::{Error, Result};
use crate::grid::{FieldVector, Grid, PointSet};
use crate::inference::Dataset;
use crate::random::{stream, NoiseSource, RandomStream};

/// Stream index reserved for data generation.
pub const DATA_STREAM: u64 = u64::MAX - 2;

fn indicator(lo: f64, hi: f64, x: f64) -> f64 {
    if x > lo && x < hi {
        1.0
    } else {
        0.0
    }
}

/// The one-dimensional truth `1_{(0.3, 0.7)}`.
pub fn indicator_1d(x: f64) -> f64 {
    indicator(0.3, 0.7, x)
}

/// The two-dimensional truth: a smooth background plus three truncated
/// oscillations of increasing frequency.
pub fn trig_2d(x: f64, y: f64) -> f64 {
    let sq = |lo: f64, hi: f64| indicator(lo, hi, x) * indicator(lo, hi, y);
    (2.0 * PI * x).cos() * (2.0 * PI * y).cos()
        + (4.0 * PI * x).sin() * (4.0 * PI * y).sin() * sq(0.25, 0.75)
        + (8.0 * PI * x).sin() * (8.0 * PI * y).sin() * sq(0.5, 0.75)
        + (16.0 * PI * x).sin() * (16.0 * PI * y).sin() * sq(0.25, 0.5)
}

/// Values of `truth` at the nodes of `grid`.
pub fn truth_on_grid(truth: &Truth, grid: &Grid) -> Result<FieldVector> {
    let pts = grid.points();
    match truth {
        Truth::Indicator1d => Ok(FieldVector::from_fn(grid.len(), |i, _| indicator_1d(pts.point(i)[0]))),
        Truth::Trig2d => Ok(FieldVector::from_fn(grid.len(), |i, _| {
            let p = pts.point(i);
            trig_2d(p[0], p[1])
        })),
        Truth::FromFile { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read truth file {}: {e}", path.display())))?;
            let values = text
                .lines()
                .filter(|l| !l.trim_start().starts_with('#'))
                .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| Error::Config(format!("bad value {t:?} in truth file: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != grid.len() {
                return Err(Error::Config(format!(
                    "truth file holds {} values, the generation mesh has {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
            Ok(FieldVector::from_vec(values))
        }
    }
}

/// Moves a field from a cell-centred `fine` grid to a cell-centred `coarse`
/// grid: block averages when the meshes nest, multilinear interpolation otherwise.
pub fn restrict(values: &FieldVector, fine: &Grid, coarse: &Grid) -> Result<FieldVector> {
    if values.len() != fine.len() || fine.dim() != coarse.dim() {
        return Err(Error::invalid("restriction needs a field on the fine grid of matching dimension"));
    }
    let (nf, nc) = (fine.n_per_side(), coarse.n_per_side());
    if nf % nc == 0 {
        let r = nf / nc;
        let mut out = FieldVector::zeros(coarse.len());
        let norm = (r.pow(fine.dim() as u32)) as f64;
        for i in 0..fine.len() {
            let multi: Vec<usize> = if fine.dim() == 1 { vec![i / r] } else { vec![(i / nf) / r, (i % nf) / r] };
            out[coarse.index(&multi)] += values[i] / norm;
        }
        Ok(out)
    } else {
        Ok(FieldVector::from_fn(coarse.len(), |i, _| {
            fine.interpolation_stencil(coarse.points().point(i)).iter().map(|&(k, w)| w * values[k]).sum()
        }))
    }
}

/// Observation locations for `layout`.
pub fn observation_points(layout: ObsLayout, n_obs: usize, dim: usize, rng: &mut RandomStream) -> Result<PointSet> {
    let axis = |s: usize| -> Vec<f64> { (1..=s).map(|j| j as f64 / (s + 1) as f64).collect() };
    let coords = match (layout, dim) {
        (ObsLayout::Random, _) => (0..n_obs * dim).map(|_| rng.random::<f64>()).collect(),
        (_, 1) => axis(n_obs),
        (_, 2) => {
            let s = square_side(n_obs)
                .ok_or_else(|| Error::Config(format!("2D uniform layouts need a square n_obs, got {n_obs}")))?;
            let a = axis(s);
            a.iter().flat_map(|&x| a.iter().flat_map(move |&y| [x, y])).collect()
        }
        _ => return Err(Error::Config(format!("unsupported dimension {dim}"))),
    };
    let mut coords: Vec<f64> = coords;
    if layout == ObsLayout::HalfDomain {
        for p in coords.chunks_mut(dim) {
            p[0] *= 0.5;
        }
    }
    PointSet::new(dim, coords)
}

/// Observations, exact values and the truth seen on both meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedData {
    pub points: PointSet,
    pub y: DVector<f64>,
    /// Noise-free values at the observation points.
    pub clean: DVector<f64>,
    pub truth_generation: FieldVector,
    pub truth_sampling: FieldVector,
}

impl GeneratedData {
    /// Attaches the observations to the sampling grid.
    pub fn dataset(&self, spec: &ExperimentSpec) -> Result<Dataset> {
        Dataset::new(self.points.clone(), self.y.clone(), spec.noise_std, &spec.sampling_grid()?, spec.observation)
    }
}

/// Evaluates the truth on the generation mesh, reads it at the nearest
/// generation node to each observation point and adds `N(0, γ²)` noise.
pub fn generate_data(spec: &ExperimentSpec) -> Result<GeneratedData> {
    let gen = spec.generation_grid()?;
    let samp = spec.sampling_grid()?;
    if spec.n_obs > gen.len() {
        return Err(Error::Config(format!("n_obs ({}) exceeds the {} generation-mesh nodes", spec.n_obs, gen.len())));
    }
    let truth_generation = truth_on_grid(&spec.truth, &gen)?;
    let mut rng = stream(spec.data_seed(), DATA_STREAM);
    let points = observation_points(spec.obs_layout, spec.n_obs, spec.dim, &mut rng)?;
    let clean = DVector::from_fn(points.len(), |j, _| truth_generation[gen.nearest_node(points.point(j))]);
    let y = DVector::from_fn(points.len(), |j, _| clean[j] + spec.noise_std * rng.standard_normal());
    let truth_sampling = restrict(&truth_generation, &gen, &samp)?;
    Ok(GeneratedData { points, y, clean, truth_generation, truth_sampling })
}
