//! Ready-made experiment specs at desk and full scale.

use super::spec::{ExperimentSpec, ObsLayout, Truth};
use crate::constructions::Construction;
use crate::fields::DEFAULT_BASE_GAMMA;
use crate::inference::{McmcConfig, ObservationKind, PotentialKind, UpdateScheme};
use crate::kernels::LengthScaleMap;

fn covop(length_scale: LengthScaleMap) -> Construction {
    Construction::CovOperator { length_scale, alpha: 4, sigma: None, base_gamma: DEFAULT_BASE_GAMMA, calibration_pilot: 200 }
}

fn mcmc(samples: u64, burn_in: u64) -> McmcConfig {
    McmcConfig {
        samples,
        burn_in,
        beta_init: 0.2,
        adapt: true,
        adapt_window: 100,
        scheme: UpdateScheme::Joint,
        potential: PotentialKind::Marginal,
        quantile_store: 2000,
    }
}

fn spec_1d(name: String, generation: usize, sampling: usize, n_obs: usize, n_layers: usize, m: McmcConfig) -> ExperimentSpec {
    ExperimentSpec {
        name,
        dim: 1,
        generation_mesh: generation,
        sampling_mesh: sampling,
        n_obs,
        obs_layout: ObsLayout::Uniform,
        observation: ObservationKind::Nearest,
        noise_std: 0.02,
        n_layers,
        seed: 1,
        data_seed: None,
        truth: Truth::Indicator1d,
        construction: covop(LengthScaleMap::clamped_exp_1d()),
        mcmc: m,
    }
}

/// 1D indicator problem: sampling mesh 100, generation mesh 200, 5·10⁴ steps with 10⁴ burn-in.
pub fn desk_1d(n_obs: usize, n_layers: usize) -> ExperimentSpec {
    spec_1d(format!("desk_1d_J{n_obs}_N{n_layers}"), 200, 100, n_obs, n_layers, mcmc(50_000, 10_000))
}

/// 1D indicator problem at full scale: sampling mesh 200, generation mesh 400, 10⁶ steps with 2·10⁵ burn-in.
pub fn full_1d(n_obs: usize, n_layers: usize) -> ExperimentSpec {
    spec_1d(format!("full_1d_J{n_obs}_N{n_layers}"), 400, 200, n_obs, n_layers, mcmc(1_000_000, 200_000))
}

fn spec_2d(name: String, generation: usize, sampling: usize, n_obs: usize, n_layers: usize, m: McmcConfig) -> ExperimentSpec {
    ExperimentSpec {
        dim: 2,
        generation_mesh: generation,
        sampling_mesh: sampling,
        noise_std: 0.02,
        truth: Truth::Trig2d,
        construction: covop(LengthScaleMap::clamped_exp_2d()),
        ..spec_1d(name, generation, sampling, n_obs, n_layers, m)
    }
}

/// 2D trigonometric problem on a 33² sampling mesh and 99² generation mesh.
pub fn desk_2d(n_obs: usize, n_layers: usize) -> ExperimentSpec {
    spec_2d(format!("desk_2d_J{n_obs}_N{n_layers}"), 99, 33, n_obs, n_layers, mcmc(50_000, 10_000))
}

/// 2D trigonometric problem at full scale: 2¹² sampling nodes, 2¹⁴ generation nodes, 4·10⁵ steps with 2·10⁵ burn-in.
pub fn full_2d(n_obs: usize, n_layers: usize) -> ExperimentSpec {
    spec_2d(format!("full_2d_J{n_obs}_N{n_layers}"), 128, 64, n_obs, n_layers, mcmc(400_000, 200_000))
}

/// Looks a preset up by name: `desk_1d`, `full_1d`, `desk_2d` or `full_2d`.
pub fn by_name(name: &str, n_obs: usize, n_layers: usize) -> Option<ExperimentSpec> {
    match name {
        "desk_1d" => Some(desk_1d(n_obs, n_layers)),
        "full_1d" => Some(full_1d(n_obs, n_layers)),
        "desk_2d" => Some(desk_2d(n_obs, n_layers)),
        "full_2d" => Some(full_2d(n_obs, n_layers)),
        _ => None,
    }
}
