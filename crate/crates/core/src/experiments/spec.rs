//! Declarative regression experiments, stored as TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constructions::Construction;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::inference::{McmcConfig, ObservationKind};

/// The unknown field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    /// `1` on `(0.3, 0.7)`, `0` elsewhere.
    #[serde(rename = "indicator_1d")]
    Indicator1d,
    /// `cos(2πx)cos(2πy)` plus truncated `sin(2^k πx) sin(2^k πy)` bumps for `k = 2, 3, 4`.
    #[serde(rename = "trig_2d")]
    Trig2d,
    /// Node values on the generation mesh in lexicographic order, separated by
    /// commas or whitespace; lines starting with `#` are skipped.
    FromFile { path: PathBuf },
}

impl Truth {
    pub fn dim(&self) -> Option<usize> {
        match self {
            Truth::Indicator1d => Some(1),
            Truth::Trig2d => Some(2),
            Truth::FromFile { .. } => None,
        }
    }
}

/// Where the `J` observation points go.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsLayout {
    /// Interior equispaced points `j/(J+1)`; in 2D an `s × s` tensor grid with `J = s²`.
    #[default]
    Uniform,
    /// I.i.d. uniform points.
    Random,
    /// The uniform layout squeezed into `x_1 < 1/2`.
    HalfDomain,
}

fn is_default_kind(k: &ObservationKind) -> bool {
    *k == ObservationKind::default()
}

/// One regression experiment: truth, meshes, data, prior depth and sampler budget.
///
/// `n_layers` counts every layer of the prior: `n_layers − 1` hyper-layers
/// are sampled by MCMC and the last layer is integrated out by GP
/// regression. One layer is a stationary Gaussian process prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub dim: usize,
    /// Nodes per side of the mesh the data are generated on.
    pub generation_mesh: usize,
    /// Nodes per side of the mesh the prior is discretized on.
    pub sampling_mesh: usize,
    pub n_obs: usize,
    #[serde(default)]
    pub obs_layout: ObsLayout,
    #[serde(default, skip_serializing_if = "is_default_kind")]
    pub observation: ObservationKind,
    pub noise_std: f64,
    pub n_layers: usize,
    pub seed: u64,
    /// Seed for the synthetic data; defaults to `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    pub truth: Truth,
    pub construction: Construction,
    pub mcmc: McmcConfig,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(format!("invalid experiment spec: {e}")))?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize experiment spec: {e}")))
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<[u8; 32]> {
        Ok(Sha256::digest(self.to_toml()?.as_bytes()).into())
    }

    pub fn hash_hex(&self) -> Result<String> {
        Ok(hex(&self.hash()?))
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn sampling_grid(&self) -> Result<Grid> {
        Grid::cell_centred(self.dim, self.sampling_mesh)
    }

    pub fn generation_grid(&self) -> Result<Grid> {
        Grid::cell_centred(self.dim, self.generation_mesh)
    }

    /// Checks the spec. Equal or coarser generation meshes are an inverse
    /// crime and need `allow_inverse_crime`.
    pub fn validate(&self, allow_inverse_crime: bool) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if !(1..=2).contains(&self.dim) {
            return cfg(format!("dim must be 1 or 2, got {}", self.dim));
        }
        if let Some(d) = self.truth.dim() {
            if d != self.dim {
                return cfg(format!("truth is {d}-dimensional but dim = {}", self.dim));
            }
        }
        if self.sampling_mesh < 2 {
            return cfg("sampling_mesh must be at least 2".into());
        }
        if self.generation_mesh <= self.sampling_mesh && !allow_inverse_crime {
            return cfg(format!(
                "generation_mesh ({}) must be finer than sampling_mesh ({}); pass --allow-inverse-crime to override",
                self.generation_mesh, self.sampling_mesh
            ));
        }
        if self.n_obs == 0 {
            return cfg("n_obs must be positive".into());
        }
        if self.n_obs > self.generation_mesh.pow(self.dim as u32) {
            return cfg(format!("n_obs ({}) exceeds the number of generation-mesh nodes", self.n_obs));
        }
        if self.dim == 2 && self.obs_layout != ObsLayout::Random && square_side(self.n_obs).is_none() {
            return cfg(format!("2D uniform layouts need n_obs to be a perfect square, got {}", self.n_obs));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return cfg("noise_std must be finite and non-negative".into());
        }
        if self.n_layers == 0 {
            return cfg("n_layers must be at least 1".into());
        }
        if self.seed > i64::MAX as u64 || self.data_seed.is_some_and(|s| s > i64::MAX as u64) {
            return cfg("seeds must fit in a signed 64-bit integer".into());
        }
        match &self.construction {
            Construction::CovFunction { .. } | Construction::CovOperator { .. } => {}
            _ => return cfg("inference needs a covariance-function or covariance-operator construction".into()),
        }
        self.construction.validate(&self.sampling_grid()?).map_err(|e| Error::Config(e.to_string()))?;
        self.mcmc.validate().map_err(|e| match e {
            Error::EmptyChain => Error::Config("burn_in must be smaller than samples".into()),
            other => other,
        })
    }
}

pub(crate) fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
