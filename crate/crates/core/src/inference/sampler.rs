//! Chain driver: burn-in with adaptation, posterior accumulation, checkpoints.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::observation::Dataset;
use super::pcn::{
    adapt_beta, initial_state, pcn_step, sample_coordinates, ExplicitPotential, MarginalPotential, NonCentredState,
    Potential, UpdateScheme,
};
use super::prior::{DeepPrior, TopCovariance};
use crate::error::{Error, Result};
use crate::experiments::{compute_error, ErrorNorm};
use crate::grid::FieldVector;
use crate::random::{stream, RandomStream};

fn default_adapt_window() -> u64 {
    100
}

fn default_quantile_store() -> usize {
    2000
}

/// Which likelihood the chain targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// Sample the hyper-layers under `Ψ` and draw the top layer by GP regression.
    #[default]
    Marginal,
    /// Sample every layer under `Φ`.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Total number of steps, burn-in included.
    pub samples: u64,
    pub burn_in: u64,
    pub beta_init: f64,
    pub adapt: bool,
    #[serde(default = "default_adapt_window")]
    pub adapt_window: u64,
    #[serde(default)]
    pub scheme: UpdateScheme,
    #[serde(default)]
    pub potential: PotentialKind,
    /// Largest number of top-layer draws kept for quantiles.
    #[serde(default = "default_quantile_store")]
    pub quantile_store: usize,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.samples {
            return Err(Error::EmptyChain);
        }
        if !(self.beta_init > 0.0 && self.beta_init <= 1.0) {
            return Err(Error::Config("beta_init must lie in (0, 1]".into()));
        }
        if self.adapt && self.adapt_window < super::pcn::MIN_ADAPT_WINDOW {
            return Err(Error::Config(format!(
                "adapt_window must be at least {}",
                super::pcn::MIN_ADAPT_WINDOW
            )));
        }
        if self.quantile_store < 3 {
            return Err(Error::Config("quantile_store must be at least 3".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> u64 {
        self.samples.saturating_sub(self.burn_in)
    }

    fn thin(&self) -> u64 {
        self.retained().div_ceil(self.quantile_store as u64).max(1)
    }
}

/// Posterior mean, pointwise quantile bands and hyper-layer length scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// Node coordinates, `dim` values per node.
    pub coords: Vec<f64>,
    pub dim: usize,
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q50: Vec<f64>,
    pub q95: Vec<f64>,
    /// `E F(u_j)^{1/2}` for each sampled hyper-layer `j`.
    pub length_scale_means: Vec<Vec<f64>>,
    /// Post-burn-in acceptance rate per sampled layer.
    pub acceptance: Vec<f64>,
    pub beta: Vec<f64>,
    pub retained: u64,
    pub quantile_draws: usize,
    /// Bands are pointwise, not simultaneous.
    pub bands: String,
    pub l1_error: Option<f64>,
    pub l2_error: Option<f64>,
}

/// Potential values along the chain, every `every` steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub every: u64,
    pub potential: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Chain {
    Marginal(NonCentredState<TopCovariance>),
    Explicit(NonCentredState<()>),
}

#[derive(Clone, Debug, PartialEq)]
struct Accumulator {
    retained: u64,
    mean_sum: Vec<f64>,
    length_scale_sums: Vec<Vec<f64>>,
    draws: Vec<Vec<f64>>,
}

/// A resumable posterior sampler for one dataset and prior.
///
/// The chain consumes stream `(seed, 0)`; top-layer draws for the quantile
/// store consume stream `(seed, 1)`, so the chain itself does not depend on
/// how many draws are stored.
pub struct Sampler<'a> {
    prior: &'a DeepPrior,
    data: &'a Dataset,
    mcmc: McmcConfig,
    n_layers: usize,
    seed: u64,
    spec_hash: [u8; 32],
    step: u64,
    chain_rng: RandomStream,
    draw_rng: RandomStream,
    chain: Chain,
    acc: Accumulator,
    record: ChainRecord,
}

impl<'a> Sampler<'a> {
    /// `n_layers` counts every layer of the prior, the top one included.
    pub fn new(
        prior: &'a DeepPrior,
        data: &'a Dataset,
        mcmc: McmcConfig,
        n_layers: usize,
        seed: u64,
        spec_hash: [u8; 32],
    ) -> Result<Self> {
        mcmc.validate()?;
        if n_layers == 0 {
            return Err(Error::Config("n_layers must be at least 1".into()));
        }
        let sampled = match mcmc.potential {
            PotentialKind::Marginal => n_layers - 1,
            PotentialKind::Explicit => n_layers,
        };
        let mut chain_rng = stream(seed, 0);
        let xi = sample_coordinates(prior, sampled, &mut chain_rng)?;
        let chain = build_chain(prior, data, mcmc.potential, xi, vec![mcmc.beta_init; sampled])?;
        let n = prior.grid().len();
        let hyper = match mcmc.potential {
            PotentialKind::Marginal => sampled,
            PotentialKind::Explicit => sampled - 1,
        };
        let acc = Accumulator {
            retained: 0,
            mean_sum: vec![0.0; n],
            length_scale_sums: vec![vec![0.0; n]; hyper],
            draws: Vec::new(),
        };
        let every = (mcmc.samples / 5000).max(1);
        Ok(Self {
            prior,
            data,
            mcmc,
            n_layers,
            seed,
            spec_hash,
            step: 0,
            chain_rng,
            draw_rng: stream(seed, 1),
            chain,
            acc,
            record: ChainRecord { every, potential: Vec::new() },
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.mcmc.samples
    }

    pub fn beta(&self) -> &[f64] {
        match &self.chain {
            Chain::Marginal(s) => &s.beta,
            Chain::Explicit(s) => &s.beta,
        }
    }

    /// Current layers `u = T(ξ)` of the sampled coordinates.
    pub fn layers(&self) -> &[FieldVector] {
        match &self.chain {
            Chain::Marginal(s) => &s.u,
            Chain::Explicit(s) => &s.u,
        }
    }

    pub fn record(&self) -> &ChainRecord {
        &self.record
    }

    /// Advances by up to `steps` steps; returns the number taken.
    pub fn run_steps(&mut self, steps: u64) -> Result<u64> {
        let mut taken = 0;
        while taken < steps && !self.is_finished() {
            self.advance()?;
            taken += 1;
        }
        Ok(taken)
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.run_steps(u64::MAX).map(|_| ())
    }

    fn advance(&mut self) -> Result<()> {
        let scheme = self.mcmc.scheme;
        let s = self.step;
        let burning = s < self.mcmc.burn_in;
        let adapt_now = burning && self.mcmc.adapt && (s + 1).is_multiple_of(self.mcmc.adapt_window);
        let end_of_burn_in = s + 1 == self.mcmc.burn_in;
        match &mut self.chain {
            Chain::Marginal(state) => {
                let pot = MarginalPotential { data: self.data, prior: self.prior };
                pcn_step(state, self.prior, &pot, scheme, &mut self.chain_rng)?;
                finish_step(state, adapt_now, end_of_burn_in);
            }
            Chain::Explicit(state) => {
                let pot = ExplicitPotential { data: self.data };
                pcn_step(state, self.prior, &pot, scheme, &mut self.chain_rng)?;
                finish_step(state, adapt_now, end_of_burn_in);
            }
        }
        if s.is_multiple_of(self.record.every) {
            let value = match &self.chain {
                Chain::Marginal(st) => st.potential,
                Chain::Explicit(st) => st.potential,
            };
            self.record.potential.push(value);
        }
        if !burning {
            self.accumulate()?;
        }
        self.step += 1;
        Ok(())
    }

    fn accumulate(&mut self) -> Result<()> {
        let index = self.acc.retained;
        let store = index.is_multiple_of(self.mcmc.thin());
        let (mean, draw, hyper): (FieldVector, Option<FieldVector>, &[FieldVector]) = match &self.chain {
            Chain::Marginal(state) => {
                let mean = state.cache.posterior_mean(&self.data.y)?;
                let draw =
                    if store { Some(state.cache.sample_posterior(self.data, &mut self.draw_rng)?) } else { None };
                (mean, draw, &state.u[..])
            }
            Chain::Explicit(state) => {
                let top = state.u.last().expect("explicit chains sample the top layer").clone();
                let draw = store.then(|| top.clone());
                (top, draw, &state.u[..state.u.len() - 1])
            }
        };
        for (s, m) in self.acc.mean_sum.iter_mut().zip(mean.iter()) {
            *s += m;
        }
        for (sums, u) in self.acc.length_scale_sums.iter_mut().zip(hyper) {
            for (s, v) in sums.iter_mut().zip(self.prior.length_scale_sqrt(u).iter()) {
                *s += v;
            }
        }
        if let Some(d) = draw {
            self.acc.draws.push(d.as_slice().to_vec());
        }
        self.acc.retained += 1;
        Ok(())
    }

    /// Summarizes the retained samples; errors are computed when a truth on
    /// the sampling grid is supplied.
    pub fn summary(&self, truth: Option<&FieldVector>) -> Result<PosteriorSummary> {
        let r = self.acc.retained;
        if r == 0 {
            return Err(Error::EmptyChain);
        }
        let n = self.prior.grid().len();
        let mean: Vec<f64> = self.acc.mean_sum.iter().map(|s| s / r as f64).collect();
        let (mut q05, mut q50, mut q95) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut column = vec![0.0; self.acc.draws.len()];
        for i in 0..n {
            for (c, d) in column.iter_mut().zip(&self.acc.draws) {
                *c = d[i];
            }
            column.sort_by(f64::total_cmp);
            q05[i] = quantile_sorted(&column, 0.05);
            q50[i] = quantile_sorted(&column, 0.5);
            q95[i] = quantile_sorted(&column, 0.95);
        }
        let length_scale_means =
            self.acc.length_scale_sums.iter().map(|s| s.iter().map(|v| v / r as f64).collect()).collect();
        let (acceptance, beta) = match &self.chain {
            Chain::Marginal(s) => ((0..s.n_layers()).map(|k| s.stats.rate(k)).collect(), s.beta.clone()),
            Chain::Explicit(s) => ((0..s.n_layers()).map(|k| s.stats.rate(k)).collect(), s.beta.clone()),
        };
        let (l1_error, l2_error) = match truth {
            Some(t) => {
                let m = FieldVector::from_vec(mean.clone());
                (
                    Some(compute_error(&m, t, self.prior.grid(), ErrorNorm::L1)?),
                    Some(compute_error(&m, t, self.prior.grid(), ErrorNorm::L2)?),
                )
            }
            None => (None, None),
        };
        Ok(PosteriorSummary {
            coords: self.prior.grid().points().coords().to_vec(),
            dim: self.prior.grid().dim(),
            mean,
            q05,
            q50,
            q95,
            length_scale_means,
            acceptance,
            beta,
            retained: r,
            quantile_draws: self.acc.draws.len(),
            bands: "pointwise".into(),
            l1_error,
            l2_error,
        })
    }

    /// Writes the full sampler state; see [`Sampler::resume`].
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let (xi, beta, stats) = match &self.chain {
            Chain::Marginal(s) => (&s.xi, &s.beta, &s.stats),
            Chain::Explicit(s) => (&s.xi, &s.beta, &s.stats),
        };
        let n = self.prior.grid().len();
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&self.spec_hash)?;
        let mut w = Writer(&mut out);
        w.u64(self.seed)?;
        w.u64(self.step)?;
        w.u64(self.n_layers as u64)?;
        w.u64(xi.len() as u64)?;
        w.u64(n as u64)?;
        w.u128(self.chain_rng.get_word_pos())?;
        w.u128(self.draw_rng.get_word_pos())?;
        w.f64s(beta)?;
        for x in xi {
            w.f64s(x.as_slice())?;
        }
        for v in [&stats.proposed, &stats.accepted, &stats.window_proposed, &stats.window_accepted] {
            for &c in v.iter() {
                w.u64(c)?;
            }
        }
        w.u64(self.acc.retained)?;
        w.f64s(&self.acc.mean_sum)?;
        for s in &self.acc.length_scale_sums {
            w.f64s(s)?;
        }
        w.u64(self.acc.draws.len() as u64)?;
        for d in &self.acc.draws {
            w.f64s(d)?;
        }
        w.u64(self.record.potential.len() as u64)?;
        w.f64s(&self.record.potential)?;
        Ok(())
    }

    /// Restores a sampler written by [`Sampler::write_checkpoint`]. The
    /// configuration must match the original run; the spec hash and seed are
    /// checked. Continuing a resumed sampler gives bit-identical results to
    /// an uninterrupted run.
    pub fn resume<R: Read>(
        mut inp: R,
        prior: &'a DeepPrior,
        data: &'a Dataset,
        mcmc: McmcConfig,
        n_layers: usize,
        seed: u64,
        spec_hash: [u8; 32],
    ) -> Result<Self> {
        let mut fresh = Self::new(prior, data, mcmc, n_layers, seed, spec_hash)?;
        let mut magic = [0u8; 8];
        inp.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut v = [0u8; 4];
        inp.read_exact(&mut v)?;
        if u32::from_le_bytes(v) != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", u32::from_le_bytes(v))));
        }
        let mut hash = [0u8; 32];
        inp.read_exact(&mut hash)?;
        if hash != spec_hash {
            return Err(Error::Checkpoint("checkpoint was written for a different spec".into()));
        }
        let mut r = Reader(&mut inp);
        if r.u64()? != seed {
            return Err(Error::Checkpoint("checkpoint was written with a different seed".into()));
        }
        let step = r.u64()?;
        let stored_layers = r.u64()? as usize;
        let sampled = r.u64()? as usize;
        let n = r.u64()? as usize;
        let expected_sampled = fresh.beta().len();
        if stored_layers != n_layers || sampled != expected_sampled || n != prior.grid().len() {
            return Err(Error::Checkpoint("checkpoint shape does not match the configuration".into()));
        }
        if step > fresh.mcmc.samples {
            return Err(Error::Checkpoint("checkpoint is past the end of the chain".into()));
        }
        let chain_pos = r.u128()?;
        let draw_pos = r.u128()?;
        let beta = r.f64s(sampled)?;
        let xi: Vec<FieldVector> = (0..sampled).map(|_| r.f64s(n).map(FieldVector::from_vec)).collect::<Result<_>>()?;
        let mut counts = [vec![], vec![], vec![], vec![]];
        for c in counts.iter_mut() {
            *c = (0..sampled).map(|_| r.u64()).collect::<Result<_>>()?;
        }
        let retained = r.u64()?;
        let mean_sum = r.f64s(n)?;
        let length_scale_sums =
            (0..fresh.acc.length_scale_sums.len()).map(|_| r.f64s(n)).collect::<Result<Vec<_>>>()?;
        let n_draws = r.u64()? as usize;
        if n_draws > fresh.mcmc.quantile_store + 1 {
            return Err(Error::Checkpoint("checkpoint holds more draws than the configuration allows".into()));
        }
        let draws = (0..n_draws).map(|_| r.f64s(n)).collect::<Result<Vec<_>>>()?;
        let n_record = r.u64()? as usize;
        if n_record as u64 > fresh.mcmc.samples {
            return Err(Error::Checkpoint("corrupt chain record length".into()));
        }
        let potential = r.f64s(n_record)?;

        let mut chain = build_chain(prior, data, fresh.mcmc.potential, xi, beta)?;
        let [proposed, accepted, window_proposed, window_accepted] = counts;
        let stats = super::pcn::AcceptanceStats { proposed, accepted, window_proposed, window_accepted };
        match &mut chain {
            Chain::Marginal(s) => s.stats = stats,
            Chain::Explicit(s) => s.stats = stats,
        }
        fresh.chain = chain;
        fresh.step = step;
        fresh.chain_rng.set_word_pos(chain_pos);
        fresh.draw_rng.set_word_pos(draw_pos);
        fresh.acc = Accumulator { retained, mean_sum, length_scale_sums, draws };
        fresh.record.potential = potential;
        Ok(fresh)
    }
}

fn finish_step<C>(state: &mut NonCentredState<C>, adapt_now: bool, end_of_burn_in: bool) {
    if adapt_now {
        adapt_beta(state);
    }
    if end_of_burn_in {
        state.stats.reset();
    }
}

fn build_chain(
    prior: &DeepPrior,
    data: &Dataset,
    kind: PotentialKind,
    xi: Vec<FieldVector>,
    beta: Vec<f64>,
) -> Result<Chain> {
    Ok(match kind {
        PotentialKind::Marginal => Chain::Marginal(initial_state(xi, beta, prior, &MarginalPotential { data, prior })?),
        PotentialKind::Explicit => Chain::Explicit(initial_state(xi, beta, prior, &ExplicitPotential { data })?),
    })
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DGPCKPT\0";
const CHECKPOINT_VERSION: u32 = 1;

struct Writer<'w, W: Write>(&'w mut W);

impl<W: Write> Writer<'_, W> {
    fn u64(&mut self, v: u64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn u128(&mut self, v: u128) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.0.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

struct Reader<'r, R: Read>(&'r mut R);

impl<R: Read> Reader<'_, R> {
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(u64::from_le_bytes(b))
    }

    fn u128(&mut self) -> Result<u128> {
        let mut b = [0u8; 16];
        self.0.read_exact(&mut b).map_err(truncated)?;
        Ok(u128::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut b = [0u8; 8];
                self.0.read_exact(&mut b).map_err(truncated)?;
                Ok(f64::from_le_bytes(b))
            })
            .collect()
    }
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated checkpoint: {e}"))
}

/// Runs a full chain and returns its summary and potential trace.
pub fn run_inference(
    prior: &DeepPrior,
    data: &Dataset,
    mcmc: &McmcConfig,
    n_layers: usize,
    seed: u64,
    truth: Option<&FieldVector>,
) -> Result<(PosteriorSummary, ChainRecord)> {
    let mut sampler = Sampler::new(prior, data, mcmc.clone(), n_layers, seed, [0; 32])?;
    sampler.run_to_end()?;
    Ok((sampler.summary(truth)?, sampler.record.clone()))
}

/// Potential of a hand-built state, exposed for diagnostics.
pub fn evaluate_potential<P: Potential>(prior: &DeepPrior, potential: &P, xi: &[FieldVector]) -> Result<f64> {
    Ok(potential.evaluate(&prior.whiten_forward(xi)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::Construction;
    use crate::grid::{Grid, PointSet};
    use crate::inference::ObservationKind;
    use crate::kernels::LengthScaleMap;
    use nalgebra::DVector;

    fn setup(n: usize) -> (DeepPrior, Dataset) {
        let prior = DeepPrior::new(
            Construction::CovOperator {
                length_scale: LengthScaleMap::clamped_exp_1d(),
                alpha: 4,
                sigma: Some(3.5),
                base_gamma: 20.0,
                calibration_pilot: 200,
            },
            Grid::cell_centred(1, n).unwrap(),
            0,
        )
        .unwrap();
        let xs: Vec<f64> = (1..=6).map(|j| j as f64 / 7.0).collect();
        let y = DVector::from_iterator(6, xs.iter().map(|&x| if (0.3..0.7).contains(&x) { 1.0 } else { 0.0 }));
        let data = Dataset::new(PointSet::from_1d(&xs).unwrap(), y, 0.1, prior.grid(), ObservationKind::Nearest).unwrap();
        (prior, data)
    }

    fn mcmc(samples: u64, burn_in: u64) -> McmcConfig {
        McmcConfig {
            samples,
            burn_in,
            beta_init: 0.3,
            adapt: true,
            adapt_window: 50,
            scheme: UpdateScheme::Joint,
            potential: PotentialKind::Marginal,
            quantile_store: 100,
        }
    }

    #[test]
    fn empty_chain_is_rejected() {
        let (prior, data) = setup(20);
        let err = Sampler::new(&prior, &data, mcmc(100, 100), 2, 0, [0; 32]).err().unwrap();
        assert!(matches!(err, Error::EmptyChain));
    }

    #[test]
    fn bands_are_nested_and_runs_reproducible() {
        let (prior, data) = setup(24);
        let cfg = mcmc(400, 100);
        let (a, ra) = run_inference(&prior, &data, &cfg, 2, 7, None).unwrap();
        let (b, rb) = run_inference(&prior, &data, &cfg, 2, 7, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        for i in 0..a.mean.len() {
            assert!(a.q05[i] <= a.q50[i] && a.q50[i] <= a.q95[i]);
        }
        assert_eq!(a.retained, 300);
        assert_eq!(a.length_scale_means.len(), 1);
    }

    #[test]
    fn resumed_chain_matches_uninterrupted_run() {
        let (prior, data) = setup(20);
        let hash = [7u8; 32];
        for kind in [PotentialKind::Marginal, PotentialKind::Explicit] {
            let cfg = McmcConfig { potential: kind, scheme: UpdateScheme::Gibbs, ..mcmc(300, 120) };
            let mut full = Sampler::new(&prior, &data, cfg.clone(), 2, 3, hash).unwrap();
            full.run_to_end().unwrap();
            let mut part = Sampler::new(&prior, &data, cfg.clone(), 2, 3, hash).unwrap();
            part.run_steps(137).unwrap();
            let mut buf = Vec::new();
            part.write_checkpoint(&mut buf).unwrap();
            drop(part);
            let mut resumed = Sampler::resume(buf.as_slice(), &prior, &data, cfg.clone(), 2, 3, hash).unwrap();
            assert_eq!(resumed.step_count(), 137);
            resumed.run_to_end().unwrap();
            assert_eq!(full.summary(None).unwrap(), resumed.summary(None).unwrap());
            assert_eq!(full.record(), resumed.record());
            assert!(Sampler::resume(buf.as_slice(), &prior, &data, cfg.clone(), 2, 3, [0; 32]).is_err());
            assert!(Sampler::resume(buf.as_slice(), &prior, &data, cfg.clone(), 2, 4, hash).is_err());
            assert!(Sampler::resume(&buf[..buf.len() / 2], &prior, &data, cfg, 2, 3, hash).is_err());
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.05) - 1.2).abs() < 1e-15);
    }
}
