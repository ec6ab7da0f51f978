//! Prior-sampling and diagnostic runs described by a TOML chain spec.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::spec::hex;
use crate::constructions::{run_chain, run_ensemble, initial_layer, ChainTrajectory, Construction, DeepChainConfig, InitialState, Layer};
use crate::ergodicity::{
    convolution_threshold, fit_spread_decay, mode_classifier, norm_trace, two_start_coupling_diagnostic,
    CouplingReport, ModeBehaviour, NormTracePoint, SpreadSeries, DEFAULT_MODE_Z, MIN_MODE_STEPS,
};
use crate::error::{Error, Result};
use crate::grid::{Grid, Layout};
use crate::random::stream;

fn default_replicas() -> usize {
    200
}

/// A deep chain on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub dim: usize,
    pub n_per_side: usize,
    pub layout: Layout,
    pub depth: usize,
    pub seed: u64,
    /// Ensemble size used by `diagnose`.
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub construction: Construction,
}

impl ChainSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid chain spec: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize chain spec: {e}")))
    }

    pub fn hash_hex(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn config(&self) -> Result<DeepChainConfig> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        let grid = Grid::new(self.dim, self.n_per_side, self.layout).map_err(|e| Error::Config(e.to_string()))?;
        DeepChainConfig::new(self.construction.clone(), grid, self.depth, self.seed)
            .map_err(|e| Error::Config(e.to_string()))?
            .resolve()
    }

    /// One chain from a prior draw of `u_0`, all on stream `(seed, 0)`.
    pub fn sample(&self) -> Result<ChainTrajectory> {
        let cfg = self.config()?;
        let mut rng = stream(self.seed, 0);
        let u0 = initial_layer(&cfg, &mut rng)?;
        run_chain(&cfg, &u0, &mut rng)
    }
}

/// Writes `x[,y],c0[,c1…]` for one layer.
pub fn write_layer_csv<W: Write>(grid: &Grid, layer: &Layer, spec_hash: &str, seed: u64, mut out: W) -> Result<()> {
    writeln!(out, "# spec_hash={spec_hash}")?;
    writeln!(out, "# seed={seed}")?;
    let values = layer.values();
    let coords = if grid.dim() == 1 { vec!["x"] } else { vec!["x", "y"] };
    let comps: Vec<String> =
        if values.ncols() == 1 { vec!["value".into()] } else { (0..values.ncols()).map(|c| format!("value_{c}")).collect() };
    writeln!(out, "{},{}", coords.join(","), comps.join(","))?;
    for i in 0..grid.len() {
        let mut cells: Vec<String> = grid.points().point(i).iter().map(|v| format!("{v:e}")).collect();
        cells.extend((0..values.ncols()).map(|c| format!("{:e}", values[(i, c)])));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Per-mode fractions over an ensemble of convolution chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: i64,
    pub lambda2: f64,
    pub decay_fraction: f64,
    pub diverge_fraction: f64,
    pub mean_lyapunov: f64,
}

/// Diagnostic output; the variant follows the construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Composition: decay of the pairwise spread of layer values.
    Spread { series: SpreadSeries },
    /// Convolution: per-mode decay or divergence.
    Modes { threshold: f64, z: f64, modes: Vec<ModeSummary> },
    /// Covariance function or operator: norm trace of one chain and the
    /// energy distance between ensembles started from `+2` and `−2`.
    Coupling { norm_trace: Vec<NormTracePoint>, coupling: CouplingReport },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticDocument {
    pub spec_hash: String,
    pub seed: u64,
    pub depth: usize,
    pub replicas: usize,
    pub diagnostic: Diagnostic,
}

pub fn diagnose(spec: &ChainSpec) -> Result<DiagnosticDocument> {
    let cfg = spec.config()?;
    let diagnostic = match &cfg.construction {
        Construction::Composition { .. } => {
            let ensemble = run_ensemble(&cfg, &InitialState::Prior, spec.replicas, spec.seed)?;
            Diagnostic::Spread { series: fit_spread_decay(&ensemble)? }
        }
        Construction::Convolution { covariance } => {
            if spec.depth < MIN_MODE_STEPS {
                return Err(Error::Config(format!("mode diagnostics need depth of at least {MIN_MODE_STEPS}")));
            }
            let ensemble = run_ensemble(&cfg, &InitialState::Prior, spec.replicas, spec.seed)?;
            let k_max = covariance.truncation().min(cfg.grid.len() / 2).min(8) as i64;
            let mut modes = Vec::new();
            for k in 1..=k_max {
                let lambda2 = covariance.fourier_variance(k);
                if lambda2 <= 0.0 {
                    continue;
                }
                let verdicts = ensemble
                    .iter()
                    .map(|t| {
                        let c: Vec<_> = t.coefficients.as_ref().expect("convolution chains keep coefficients").iter().map(|l| l[k as usize]).collect();
                        mode_classifier(k, &c, lambda2, DEFAULT_MODE_Z)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let r = verdicts.len() as f64;
                let frac = |b: ModeBehaviour| verdicts.iter().filter(|v| v.verdict == b).count() as f64 / r;
                let finite: Vec<f64> = verdicts.iter().map(|v| v.lyapunov).filter(|l| l.is_finite()).collect();
                modes.push(ModeSummary {
                    mode: k,
                    lambda2,
                    decay_fraction: frac(ModeBehaviour::Decay),
                    diverge_fraction: frac(ModeBehaviour::Diverge),
                    mean_lyapunov: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
                });
            }
            Diagnostic::Modes { threshold: convolution_threshold(), z: DEFAULT_MODE_Z, modes }
        }
        Construction::CovFunction { .. } | Construction::CovOperator { .. } => {
            let n = cfg.grid.len();
            let hi = Layer::scalar(crate::grid::FieldVector::from_element(n, 2.0));
            let lo = Layer::scalar(crate::grid::FieldVector::from_element(n, -2.0));
            let (coupling, a, _) = two_start_coupling_diagnostic(&cfg, &hi, &lo, spec.replicas, false)?;
            Diagnostic::Coupling { norm_trace: norm_trace(&a[0]), coupling }
        }
    };
    Ok(DiagnosticDocument { spec_hash: spec.hash_hex()?, seed: spec.seed, depth: spec.depth, replicas: spec.replicas, diagnostic })
}
