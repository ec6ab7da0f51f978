//! JSON and CSV artifacts. Every file carries the spec hash and seed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::run::ExperimentRun;
use super::spec::{ExperimentSpec, ObsLayout, Truth};
use crate::error::{Error, Result};
use crate::inference::PosteriorSummary;

/// The summary JSON written by `infer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub name: String,
    pub spec_hash: String,
    pub seed: u64,
    pub data_seed: u64,
    pub n_layers: usize,
    pub n_obs: usize,
    pub noise_std: f64,
    pub truth: Truth,
    pub obs_placement: String,
    pub summary: PosteriorSummary,
}

impl SummaryDocument {
    pub fn new(spec: &ExperimentSpec, run: &ExperimentRun) -> Self {
        Self {
            name: spec.name.clone(),
            spec_hash: run.spec_hash.clone(),
            seed: spec.seed,
            data_seed: spec.data_seed(),
            n_layers: spec.n_layers,
            n_obs: spec.n_obs,
            noise_std: spec.noise_std,
            truth: spec.truth.clone(),
            obs_placement: obs_placement(spec),
            summary: run.summary.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid summary file: {e}")))
    }
}

fn obs_placement(spec: &ExperimentSpec) -> String {
    let base = match (spec.obs_layout, spec.dim) {
        (ObsLayout::Random, _) => "i.i.d. uniform points",
        (_, 1) => "interior equispaced points j/(J+1)",
        _ => "interior equispaced tensor grid (i/(s+1), k/(s+1)), J = s^2",
    };
    match spec.obs_layout {
        ObsLayout::HalfDomain => format!("{base}, first coordinate scaled into (0, 1/2)"),
        _ => base.to_string(),
    }
}

fn header<W: Write>(out: &mut W, spec_hash: &str, seed: u64) -> Result<()> {
    writeln!(out, "# spec_hash={spec_hash}")?;
    writeln!(out, "# seed={seed}")?;
    Ok(())
}

fn coord_names(dim: usize) -> &'static str {
    if dim == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn write_row<W: Write>(out: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let cells: Vec<String> = values.into_iter().map(|v| format!("{v:e}")).collect();
    writeln!(out, "{}", cells.join(","))?;
    Ok(())
}

/// Per-node table: coordinates, mean, quantiles, truth and mean length scales.
pub fn write_summary_csv<W: Write>(doc: &SummaryDocument, truth: &[f64], mut out: W) -> Result<()> {
    let s = &doc.summary;
    header(&mut out, &doc.spec_hash, doc.seed)?;
    let mut cols = format!("{},mean,q05,q50,q95,truth", coord_names(s.dim));
    for j in 0..s.length_scale_means.len() {
        cols.push_str(&format!(",length_scale_{j}"));
    }
    writeln!(out, "{cols}")?;
    for i in 0..s.mean.len() {
        let mut row: Vec<f64> = s.coords[i * s.dim..(i + 1) * s.dim].to_vec();
        row.extend([s.mean[i], s.q05[i], s.q50[i], s.q95[i], truth[i]]);
        row.extend(s.length_scale_means.iter().map(|l| l[i]));
        write_row(&mut out, row)?;
    }
    Ok(())
}

/// Observation points with noisy and clean values.
pub fn write_data_csv<W: Write>(spec: &ExperimentSpec, run: &ExperimentRun, mut out: W) -> Result<()> {
    header(&mut out, &run.spec_hash, spec.seed)?;
    writeln!(out, "{},y,clean", coord_names(spec.dim))?;
    let pts = &run.data.points;
    for j in 0..pts.len() {
        let mut row = pts.point(j).to_vec();
        row.extend([run.data.y[j], run.data.clean[j]]);
        write_row(&mut out, row)?;
    }
    Ok(())
}

/// Potential values along the chain.
pub fn write_trace_csv<W: Write>(spec: &ExperimentSpec, run: &ExperimentRun, mut out: W) -> Result<()> {
    header(&mut out, &run.spec_hash, spec.seed)?;
    writeln!(out, "step,potential")?;
    for (k, p) in run.record.potential.iter().enumerate() {
        writeln!(out, "{},{p:e}", k as u64 * run.record.every)?;
    }
    Ok(())
}
