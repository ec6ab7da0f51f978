//! Empirical diagnostics for the large-depth behaviour of layered chains.
//!
//! All functions are pure in their recorded inputs; the simulation helpers
//! (`two_start_coupling_diagnostic`, `lyapunov_constant_estimate`) only add
//! seeded sampling on top.

use num_complex::Complex64;
use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constructions::{initial_layer, run_chain, ChainTrajectory, DeepChainConfig, Layer};
use crate::error::{Error, Result};
use crate::random::{stream, NoiseSource, RandomStream};

/// The Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `E log|η|²` for `η ~ N(0,1)`.
pub const LOG_CHI2_MEAN: f64 = -EULER_GAMMA - std::f64::consts::LN_2;

/// Fewest replicas accepted by [`fit_spread_decay`].
pub const MIN_SPREAD_REPLICAS: usize = 100;

/// Layers skipped at the start of a spread series before fitting.
pub const SPREAD_TRANSIENT: usize = 2;

/// Shortest coefficient trajectory accepted by [`mode_classifier`].
pub const MIN_MODE_STEPS: usize = 1000;

/// Default half-width multiplier for the Lyapunov interval: the probable error.
pub const DEFAULT_MODE_Z: f64 = 0.6745;

/// `2e^γ`, the almost-sure decay threshold on `|λ_k|²` for convolution chains.
pub fn convolution_threshold() -> f64 {
    2.0 * EULER_GAMMA.exp()
}

/// Mean over pairs `i < j` of `(v_i − v_j)²`, in `O(n)`.
pub fn mean_square_pair_spread(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    2.0 * ss / (n - 1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadVerdict {
    Contracting,
    NotContracting,
    /// Every replica has zero spread from the first fitted layer on.
    AlreadyTrivial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadLayer {
    /// Ensemble mean of the per-replica mean-square pairwise spread.
    pub mean_square_spread: f64,
    /// Ensemble mean of the per-replica maximum pairwise distance.
    pub max_spread: f64,
    /// Mean over replicas of `S_{n+1}/S_n` (replicas with `S_n = 0` excluded).
    pub one_step_ratio: Option<f64>,
}

/// Ensemble spread statistics with a fitted geometric decay rate.
///
/// The rate is the mean over fitted layers of `log r̂_n`, where `r̂_n` is the
/// replica mean of the one-step ratio `S_{n+1}/S_n`. By the tower property
/// `Π r̂_n` estimates the decay of the mean-square spread; unlike the raw
/// ensemble mean, whose per-replica factors are products of scaled `χ²₁`
/// variables, it is not dominated by a handful of replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSeries {
    pub replicas: usize,
    pub layers: Vec<SpreadLayer>,
    pub rate: Option<f64>,
    pub rate_standard_error: Option<f64>,
    /// Fitted rate obtained by least squares on the raw log ensemble mean.
    pub raw_rate: Option<f64>,
    pub verdict: SpreadVerdict,
}

impl SpreadSeries {
    /// `rate + z·SE < 0`.
    pub fn significantly_negative(&self, z: f64) -> bool {
        match (self.rate, self.rate_standard_error) {
            (Some(r), Some(se)) => r + z * se < 0.0,
            _ => false,
        }
    }

    /// `|rate − log c| ≤ tol`, for comparison with a theoretical contraction `c`.
    pub fn within(&self, c: f64, tol: f64) -> bool {
        self.rate.is_some_and(|r| (r - c.ln()).abs() <= tol)
    }
}

/// Fits the spread decay of a composition ensemble (at least
/// [`MIN_SPREAD_REPLICAS`] trajectories of equal depth).
pub fn fit_spread_decay(ensemble: &[ChainTrajectory]) -> Result<SpreadSeries> {
    let ms: Vec<Vec<f64>> =
        ensemble.iter().map(|t| t.layers.iter().map(Layer::mean_square_spread).collect()).collect();
    let mx: Vec<Vec<f64>> = ensemble.iter().map(|t| t.layers.iter().map(Layer::max_spread).collect()).collect();
    fit_spread_series(&ms, &mx)
}

/// As [`fit_spread_decay`] on raw per-replica series `spreads[r][n]`.
pub fn fit_spread_series(spreads: &[Vec<f64>], max_spreads: &[Vec<f64>]) -> Result<SpreadSeries> {
    let replicas = spreads.len();
    if replicas < MIN_SPREAD_REPLICAS {
        return Err(Error::invalid(format!("spread fit needs at least {MIN_SPREAD_REPLICAS} replicas, got {replicas}")));
    }
    let depth = spreads[0].len();
    if spreads.iter().chain(max_spreads).any(|s| s.len() != depth) || max_spreads.len() != replicas {
        return Err(Error::invalid("spread series differ in length"));
    }
    if spreads.iter().flatten().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("spreads must be finite and non-negative"));
    }
    let mean_at = |series: &[Vec<f64>], n: usize| series.iter().map(|s| s[n]).sum::<f64>() / replicas as f64;
    let layers: Vec<SpreadLayer> = (0..depth)
        .map(|n| {
            let one_step_ratio = (n + 1 < depth)
                .then(|| {
                    let ratios: Vec<f64> =
                        spreads.iter().filter(|s| s[n] > 0.0).map(|s| s[n + 1] / s[n]).collect();
                    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
                })
                .flatten();
            SpreadLayer {
                mean_square_spread: mean_at(spreads, n),
                max_spread: mean_at(max_spreads, n),
                one_step_ratio,
            }
        })
        .collect();

    let fitted = &layers[SPREAD_TRANSIENT.min(depth)..];
    if fitted.iter().all(|l| l.mean_square_spread == 0.0) {
        return Ok(SpreadSeries {
            replicas,
            layers,
            rate: None,
            rate_standard_error: None,
            raw_rate: None,
            verdict: SpreadVerdict::AlreadyTrivial,
        });
    }
    let logs: Vec<f64> = fitted
        .iter()
        .filter_map(|l| l.one_step_ratio)
        .take_while(|r| *r > 0.0)
        .map(f64::ln)
        .collect();
    let (rate, rate_standard_error) = match logs.len() {
        0 => (None, None),
        k => {
            let mean = logs.iter().sum::<f64>() / k as f64;
            let se = if k > 1 {
                let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
                Some((var / k as f64).sqrt())
            } else {
                None
            };
            (Some(mean), se)
        }
    };
    let raw: Vec<(f64, f64)> = fitted
        .iter()
        .enumerate()
        .filter(|(_, l)| l.mean_square_spread > 0.0)
        .map(|(i, l)| (i as f64, l.mean_square_spread.ln()))
        .collect();
    let raw_rate = least_squares_slope(&raw);
    let verdict = match rate {
        Some(r) if r < 0.0 => SpreadVerdict::Contracting,
        _ => SpreadVerdict::NotContracting,
    };
    Ok(SpreadSeries { replicas, layers, rate, rate_standard_error, raw_rate, verdict })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// Per-step growth exponent of the replica mean of `|c_n|²`, estimated by
/// chaining replica means of the one-step ratios `|c_{n+1}|²/|c_n|²` over the
/// first `steps` steps. Returns `(exponent, standard error)`.
pub fn mean_square_growth(series: &[Vec<Complex64>], steps: usize) -> Result<(f64, f64)> {
    if series.len() < 2 {
        return Err(Error::invalid("mean-square growth needs at least two replicas"));
    }
    if steps < 2 || series.iter().any(|s| s.len() <= steps) {
        return Err(Error::invalid("coefficient series shorter than the requested window"));
    }
    let logs: Vec<f64> = (0..steps)
        .map(|n| {
            let ratios: Vec<f64> = series
                .iter()
                .filter(|s| s[n].norm_sqr() > 0.0)
                .map(|s| s[n + 1].norm_sqr() / s[n].norm_sqr())
                .collect();
            if ratios.is_empty() {
                return Err(Error::invalid(format!("every replica vanished by step {n}")));
            }
            Ok((ratios.iter().sum::<f64>() / ratios.len() as f64).ln())
        })
        .collect::<Result<_>>()?;
    let k = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / k;
    let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeBehaviour {
    Decay,
    Diverge,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeVerdict {
    pub mode: i64,
    pub lambda2: f64,
    pub threshold: f64,
    /// `(1/n) Σ log|c_j / c_{j−1}|²`; estimates `log λ² + E log|η|²`.
    pub lyapunov: f64,
    pub ci_half_width: f64,
    /// Growth exponent of the mean square, `log λ²`.
    pub mean_square_exponent: f64,
    pub steps: usize,
    pub verdict: ModeBehaviour,
}

/// Classifies one mode from its coefficient trajectory `c_0, …, c_n`.
/// The interval half-width is `z` times the plug-in standard error.
pub fn mode_classifier(mode: i64, coefficients: &[Complex64], lambda2: f64, z: f64) -> Result<ModeVerdict> {
    if coefficients.first().is_some_and(|c| c.norm_sqr() == 0.0) {
        return Ok(indeterminate(mode, lambda2, 0));
    }
    let increments: Vec<f64> = coefficients
        .windows(2)
        .map(|w| w[1].norm_sqr().ln() - w[0].norm_sqr().ln())
        .take_while(|v| v.is_finite())
        .collect();
    classify_log_increments(mode, &increments, lambda2, z)
}

/// As [`mode_classifier`] on precomputed increments `log|c_j|² − log|c_{j−1}|²`,
/// which avoids overflow for long trajectories.
pub fn classify_log_increments(mode: i64, increments: &[f64], lambda2: f64, z: f64) -> Result<ModeVerdict> {
    if !(lambda2 > 0.0) {
        return Err(Error::invalid("lambda2 must be positive"));
    }
    if increments.len() < MIN_MODE_STEPS {
        if increments.len() < 2 {
            return Ok(indeterminate(mode, lambda2, increments.len()));
        }
        return Err(Error::invalid(format!(
            "mode classification needs at least {MIN_MODE_STEPS} steps, got {}",
            increments.len()
        )));
    }
    let n = increments.len() as f64;
    let mean = increments.iter().sum::<f64>() / n;
    let var = increments.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let half = z * (var / n).sqrt();
    let verdict = if mean + half < 0.0 {
        ModeBehaviour::Decay
    } else if mean - half > 0.0 {
        ModeBehaviour::Diverge
    } else {
        ModeBehaviour::Indeterminate
    };
    Ok(ModeVerdict {
        mode,
        lambda2,
        threshold: convolution_threshold(),
        lyapunov: mean,
        ci_half_width: half,
        mean_square_exponent: lambda2.ln(),
        steps: increments.len(),
        verdict,
    })
}

fn indeterminate(mode: i64, lambda2: f64, steps: usize) -> ModeVerdict {
    ModeVerdict {
        mode,
        lambda2,
        threshold: convolution_threshold(),
        lyapunov: f64::NAN,
        ci_half_width: f64::NAN,
        mean_square_exponent: lambda2.ln(),
        steps,
        verdict: ModeBehaviour::Indeterminate,
    }
}

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Estimates `E log|η|²`, `η ~ N(0,1)`, from `n ≥ 10⁴` draws.
pub fn lyapunov_constant_estimate(n: usize, rng: &mut RandomStream) -> Result<MonteCarloEstimate> {
    if n < 10_000 {
        return Err(Error::invalid(format!("Lyapunov estimate needs at least 10^4 draws, got {n}")));
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let eta = rng.standard_normal();
        let v = (eta * eta).ln();
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
    Ok(MonteCarloEstimate { mean, standard_error: (var / n as f64).sqrt(), samples: n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTracePoint {
    pub layer: usize,
    pub norm: f64,
    pub running_mean: f64,
}

/// Discrete `L²` norms per layer and their cumulative mean.
pub fn norm_trace(traj: &ChainTrajectory) -> Vec<NormTracePoint> {
    let mut acc = 0.0;
    traj.stats
        .iter()
        .enumerate()
        .map(|(layer, s)| {
            acc += s.norm;
            NormTracePoint { layer, norm: s.norm, running_mean: acc / (layer + 1) as f64 }
        })
        .collect()
}

/// Energy distance `2E‖X−Y‖ − E‖X−X′‖ − E‖Y−Y′‖` between two samples,
/// evaluated as a V-statistic so that identical samples give exactly zero.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mean_dist = |p: &[Vec<f64>], q: &[Vec<f64>]| -> f64 {
        let total: f64 = p
            .par_iter()
            .map(|x| q.iter().map(|y| crate::grid::sq_dist(x, y).sqrt()).sum::<f64>())
            .sum();
        total / (p.len() * q.len()) as f64
    };
    let v = 2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
    v.max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub replicas: usize,
    pub shared_noise: bool,
    /// Energy distance between the two ensembles at every layer.
    pub distance: Vec<f64>,
}

impl CouplingReport {
    /// Fraction of bootstrap resamples (replicas resampled jointly across
    /// layers and ensembles) in which layer `late` is closer than layer `early`.
    pub fn bootstrap_decrease(
        a: &[ChainTrajectory],
        b: &[ChainTrajectory],
        early: usize,
        late: usize,
        resamples: usize,
        seed: u64,
    ) -> f64 {
        let r = a.len().min(b.len());
        let idx: Vec<usize> = (0..r).collect();
        let wins = (0..resamples as u64)
            .into_par_iter()
            .filter(|&s| {
                let mut rng = stream(seed, s);
                let pick: Vec<usize> = (0..r).map(|_| *idx.choose(&mut rng).unwrap()).collect();
                let d = |layer: usize| {
                    let xa: Vec<Vec<f64>> = pick.iter().map(|&i| layer_vector(&a[i].layers[layer])).collect();
                    let xb: Vec<Vec<f64>> = pick.iter().map(|&i| layer_vector(&b[i].layers[layer])).collect();
                    energy_distance(&xa, &xb)
                };
                d(late) < d(early)
            })
            .count();
        wins as f64 / resamples as f64
    }
}

fn layer_vector(l: &Layer) -> Vec<f64> {
    l.values().as_slice().to_vec()
}

/// Runs `replicas` chains from each of `u0_a` and `u0_b` and reports the
/// per-layer energy distance between the two ensembles. With `shared_noise`
/// replica `r` of both ensembles consumes the same stream.
pub fn two_start_coupling_diagnostic(
    cfg: &DeepChainConfig,
    u0_a: &Layer,
    u0_b: &Layer,
    replicas: usize,
    shared_noise: bool,
) -> Result<(CouplingReport, Vec<ChainTrajectory>, Vec<ChainTrajectory>)> {
    if replicas < 200 {
        return Err(Error::invalid(format!("coupling diagnostic needs at least 200 replicas, got {replicas}")));
    }
    let cfg = cfg.resolve()?;
    let run = |u0: &Layer, offset: u64| -> Result<Vec<ChainTrajectory>> {
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| run_chain(&cfg, u0, &mut stream(cfg.seed, offset + r)))
            .collect()
    };
    let a = run(u0_a, 0)?;
    let b = run(u0_b, if shared_noise { 0 } else { replicas as u64 })?;
    let distance = (0..=cfg.depth)
        .map(|n| {
            let xa: Vec<Vec<f64>> = a.iter().map(|t| layer_vector(&t.layers[n])).collect();
            let xb: Vec<Vec<f64>> = b.iter().map(|t| layer_vector(&t.layers[n])).collect();
            energy_distance(&xa, &xb)
        })
        .collect();
    Ok((CouplingReport { replicas, shared_noise, distance }, a, b))
}

/// Draws `replicas` prior initial layers, one per stream `(seed, r)`.
pub fn prior_initial_layers(cfg: &DeepChainConfig, replicas: usize, seed: u64) -> Result<Vec<Layer>> {
    let cfg = cfg.resolve()?;
    (0..replicas as u64).into_par_iter().map(|r| initial_layer(&cfg, &mut stream(seed, r))).collect()
}
