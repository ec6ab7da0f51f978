//! Fixtures shared by the benchmarks.

use deepgp::experiments::{generate_data, presets, ExperimentSpec};
use deepgp::inference::{Dataset, DeepPrior};
use deepgp::{stream, FieldVector, Grid, Layout, LengthScaleMap, RandomStream};
use rand::Rng;

/// A nodal 1D grid with a smooth random field on it.
pub fn nodal_field(n: usize, seed: u64) -> (Grid, FieldVector) {
    let grid = Grid::new(1, n, Layout::Nodal).expect("valid grid");
    let mut rng: RandomStream = stream(seed, 0);
    let (a, b): (f64, f64) = (rng.random(), rng.random());
    let u = FieldVector::from_fn(n, |i, _| {
        let x = grid.points().point(i)[0];
        0.05 * (1.0 + a * (6.0 * x).sin() + b * (11.0 * x).cos())
    });
    (grid, u)
}

pub fn length_scale() -> LengthScaleMap {
    LengthScaleMap::Square
}

/// The desk-scale 1D regression problem with its prior and data.
pub fn desk_problem(n_obs: usize, n_layers: usize) -> (ExperimentSpec, DeepPrior, Dataset) {
    let spec = presets::desk_1d(n_obs, n_layers);
    let data = generate_data(&spec).expect("data");
    let dataset = data.dataset(&spec).expect("dataset");
    let prior = DeepPrior::new(spec.construction.clone(), spec.sampling_grid().expect("grid"), spec.seed).expect("prior");
    (spec, prior, dataset)
}
