//! Non-centred pCN moves on the whitened coordinates of a deep prior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::observation::{potential_phi, Dataset};
use super::prior::{DeepPrior, TopCovariance};
use crate::error::{Error, Result};
use crate::grid::FieldVector;
use crate::random::RandomStream;

/// Target acceptance rate of the adaptive step-size rule.
pub const TARGET_ACCEPTANCE: f64 = 0.3;

/// Fewest proposals per layer before [`adapt_beta`] updates a step size.
pub const MIN_ADAPT_WINDOW: u64 = 50;

pub const BETA_MIN: f64 = 1e-4;

/// A negative log-likelihood evaluated on the layers `u = T(ξ)`.
pub trait Potential {
    /// Extra per-state data kept alongside the value (for example the
    /// factorized marginal covariance).
    type Cache;

    fn evaluate(&self, u: &[FieldVector]) -> Result<(f64, Self::Cache)>;
}

/// `Φ ≡ 0`: the sampler targets the prior.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    type Cache = ();

    fn evaluate(&self, _u: &[FieldVector]) -> Result<(f64, ())> {
        Ok((0.0, ()))
    }
}

/// `Φ(u_top; y)` with the last layer observed directly.
#[derive(Clone, Copy, Debug)]
pub struct ExplicitPotential<'a> {
    pub data: &'a Dataset,
}

impl Potential for ExplicitPotential<'_> {
    type Cache = ();

    fn evaluate(&self, u: &[FieldVector]) -> Result<(f64, ())> {
        let top = u.last().ok_or_else(|| Error::invalid("explicit potential needs at least one layer"))?;
        Ok((potential_phi(top, self.data), ()))
    }
}

/// `Ψ(u_last; y)`: the layer after the sampled ones is integrated out.
#[derive(Clone, Copy, Debug)]
pub struct MarginalPotential<'a> {
    pub data: &'a Dataset,
    pub prior: &'a DeepPrior,
}

impl Potential for MarginalPotential<'_> {
    type Cache = TopCovariance;

    fn evaluate(&self, u: &[FieldVector]) -> Result<(f64, TopCovariance)> {
        let top = self.prior.top_covariance(u, self.data)?;
        Ok((top.psi(&self.data.y), top))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScheme {
    /// Propose every layer at once and accept or reject jointly.
    #[default]
    Joint,
    /// Sweep the layers in order, accepting or rejecting each separately.
    Gibbs,
}

/// Per-layer proposal and acceptance counts, in total and for the current
/// adaptation window.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposed: Vec<u64>,
    pub accepted: Vec<u64>,
    pub window_proposed: Vec<u64>,
    pub window_accepted: Vec<u64>,
}

impl AcceptanceStats {
    fn new(layers: usize) -> Self {
        Self {
            proposed: vec![0; layers],
            accepted: vec![0; layers],
            window_proposed: vec![0; layers],
            window_accepted: vec![0; layers],
        }
    }

    fn record(&mut self, layer: usize, accepted: bool) {
        self.proposed[layer] += 1;
        self.window_proposed[layer] += 1;
        if accepted {
            self.accepted[layer] += 1;
            self.window_accepted[layer] += 1;
        }
    }

    pub fn rate(&self, layer: usize) -> f64 {
        if self.proposed[layer] == 0 {
            0.0
        } else {
            self.accepted[layer] as f64 / self.proposed[layer] as f64
        }
    }

    /// Clears the total counts, keeping nothing from burn-in.
    pub fn reset(&mut self) {
        *self = Self::new(self.proposed.len());
    }
}

/// Sampler state: whitened coordinates, the layers they map to, the cached
/// potential and per-layer step sizes.
#[derive(Clone, Debug)]
pub struct NonCentredState<C> {
    pub xi: Vec<FieldVector>,
    pub u: Vec<FieldVector>,
    pub potential: f64,
    pub cache: C,
    pub beta: Vec<f64>,
    pub stats: AcceptanceStats,
}

impl<C> NonCentredState<C> {
    pub fn n_layers(&self) -> usize {
        self.xi.len()
    }
}

/// Builds a consistent state from given coordinates.
pub fn initial_state<P: Potential>(
    xi: Vec<FieldVector>,
    beta: Vec<f64>,
    prior: &DeepPrior,
    potential: &P,
) -> Result<NonCentredState<P::Cache>> {
    if beta.len() != xi.len() {
        return Err(Error::invalid("need one step size per sampled layer"));
    }
    if beta.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
        return Err(Error::invalid("step sizes must lie in (0, 1]"));
    }
    let u = prior.whiten_forward(&xi)?;
    let (value, cache) = potential.evaluate(&u)?;
    let stats = AcceptanceStats::new(xi.len());
    Ok(NonCentredState { xi, u, potential: value, cache, beta, stats })
}

/// Draws `layers` whitened coordinates from the prior.
pub fn sample_coordinates(prior: &DeepPrior, layers: usize, rng: &mut RandomStream) -> Result<Vec<FieldVector>> {
    (0..layers)
        .map(|k| if k == 0 { prior.sample_base(rng) } else { Ok(prior.sample_white(rng)) })
        .collect()
}

fn propose_layer(prior: &DeepPrior, k: usize, xi: &FieldVector, beta: f64, rng: &mut RandomStream) -> Result<FieldVector> {
    let zeta = if k == 0 { prior.sample_base(rng)? } else { prior.sample_white(rng) };
    let keep = (1.0 - beta * beta).max(0.0).sqrt();
    Ok(xi * keep + zeta * beta)
}

fn accept(current: f64, proposed: f64, rng: &mut RandomStream) -> bool {
    let log_alpha = current - proposed;
    let u: f64 = rng.random();
    log_alpha >= 0.0 || u < log_alpha.exp()
}

/// One pCN update, `ξ̂_k = (1 − β_k²)^{1/2} ξ_k + β_k ζ_k`, accepted with
/// probability `min{1, exp(Φ(T(ξ)) − Φ(T(ξ̂)))}`.
///
/// `ζ_0 ~ N(0, C_0)` and `ζ_k ~ N(0, I)` for `k ≥ 1`, so the move preserves
/// the prior on `ξ`. With [`UpdateScheme::Gibbs`] the layers are updated one
/// at a time in a single sweep.
pub fn pcn_step<P: Potential>(
    state: &mut NonCentredState<P::Cache>,
    prior: &DeepPrior,
    potential: &P,
    scheme: UpdateScheme,
    rng: &mut RandomStream,
) -> Result<()> {
    let layers = state.n_layers();
    if layers == 0 {
        return Ok(());
    }
    match scheme {
        UpdateScheme::Joint => {
            let xi: Vec<FieldVector> = (0..layers)
                .map(|k| propose_layer(prior, k, &state.xi[k], state.beta[k], rng))
                .collect::<Result<_>>()?;
            let u = prior.whiten_forward(&xi)?;
            let (value, cache) = potential.evaluate(&u)?;
            let ok = accept(state.potential, value, rng);
            for k in 0..layers {
                state.stats.record(k, ok);
            }
            if ok {
                state.xi = xi;
                state.u = u;
                state.potential = value;
                state.cache = cache;
            }
        }
        UpdateScheme::Gibbs => {
            for k in 0..layers {
                let mut xi = state.xi.clone();
                xi[k] = propose_layer(prior, k, &state.xi[k], state.beta[k], rng)?;
                let u = prior.whiten_forward(&xi)?;
                let (value, cache) = potential.evaluate(&u)?;
                let ok = accept(state.potential, value, rng);
                state.stats.record(k, ok);
                if ok {
                    state.xi = xi;
                    state.u = u;
                    state.potential = value;
                    state.cache = cache;
                }
            }
        }
    }
    Ok(())
}

/// `β ← clamp(β · exp(α̂ − 0.3), 10⁻⁴, 1)` for every layer whose window holds
/// at least [`MIN_ADAPT_WINDOW`] proposals; those windows are then cleared.
pub fn adapt_beta<C>(state: &mut NonCentredState<C>) {
    for k in 0..state.n_layers() {
        let n = state.stats.window_proposed[k];
        if n < MIN_ADAPT_WINDOW {
            continue;
        }
        let rate = state.stats.window_accepted[k] as f64 / n as f64;
        state.beta[k] = (state.beta[k] * (rate - TARGET_ACCEPTANCE).exp()).clamp(BETA_MIN, 1.0);
        state.stats.window_proposed[k] = 0;
        state.stats.window_accepted[k] = 0;
    }
}
