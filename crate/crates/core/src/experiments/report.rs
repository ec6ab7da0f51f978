//! Error tables across observation counts and prior depths.

use std::collections::BTreeSet;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::ErrorNorm;
use super::output::SummaryDocument;
use super::run::{run_experiment, ExperimentRun};
use super::spec::{ExperimentSpec, Truth};
use crate::error::{Error, Result};
use crate::random::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub name: String,
    pub n_obs: usize,
    pub n_layers: usize,
    pub l1: f64,
    pub l2: f64,
    pub noise_std: f64,
    pub truth: Truth,
    pub spec_hash: String,
    pub seed: u64,
}

impl ErrorRow {
    pub fn from_document(doc: &SummaryDocument) -> Result<Self> {
        let (Some(l1), Some(l2)) = (doc.summary.l1_error, doc.summary.l2_error) else {
            return Err(Error::Config(format!("summary {} carries no errors", doc.name)));
        };
        Ok(Self {
            name: doc.name.clone(),
            n_obs: doc.n_obs,
            n_layers: doc.n_layers,
            l1,
            l2,
            noise_std: doc.noise_std,
            truth: doc.truth.clone(),
            spec_hash: doc.spec_hash.clone(),
            seed: doc.seed,
        })
    }
}

/// Rows sharing one truth and one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    /// Refuses rows that disagree on `γ` or on the truth.
    pub fn new(rows: Vec<ErrorRow>) -> Result<Self> {
        if let Some(first) = rows.first() {
            for r in &rows[1..] {
                if r.noise_std != first.noise_std {
                    return Err(Error::Config(format!(
                        "cannot aggregate runs with noise_std {} and {}",
                        first.noise_std, r.noise_std
                    )));
                }
                if r.truth != first.truth {
                    return Err(Error::Config("cannot aggregate runs with different truths".into()));
                }
            }
        }
        if rows.iter().any(|r| !(r.l1 >= 0.0 && r.l2 >= 0.0)) {
            return Err(Error::invalid("errors must be non-negative"));
        }
        Ok(Self { rows })
    }

    fn lookup(&self, n_obs: usize, n_layers: usize) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.n_obs == n_obs && r.n_layers == n_layers)
    }

    /// Markdown table with one row per `J` (largest first) and one column per depth.
    pub fn table(&self, norm: ErrorNorm) -> String {
        let js: BTreeSet<usize> = self.rows.iter().map(|r| r.n_obs).collect();
        let ns: BTreeSet<usize> = self.rows.iter().map(|r| r.n_layers).collect();
        let mut out = String::from("| J |");
        for &n in &ns {
            out.push_str(&format!(" {n} layer{} |", if n == 1 { "" } else { "s" }));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(ns.len()));
        out.push('\n');
        for &j in js.iter().rev() {
            out.push_str(&format!("| {j} |"));
            for &n in &ns {
                match self.lookup(j, n) {
                    Some(r) => {
                        let v = if norm == ErrorNorm::L1 { r.l1 } else { r.l2 };
                        out.push_str(&format!(" {v:.4} |"));
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,n_obs,n_layers,l1,l2,noise_std,spec_hash,seed\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{},{}\n",
                r.name, r.n_obs, r.n_layers, r.l1, r.l2, r.noise_std, r.spec_hash, r.seed
            ));
        }
        out
    }
}

/// Seed for fan-out cell `index` under `master`, kept within `i64` range.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream(master, index).next_u64() >> 1
}

/// Runs every `(J, N)` cell in parallel. Runs sharing `J` share one dataset;
/// cell `c` (row-major over `js × layers`) samples with seed
/// `derive_seed(master, c)`.
pub fn run_report(
    base: &ExperimentSpec,
    js: &[usize],
    layers: &[usize],
    master_seed: u64,
    allow_inverse_crime: bool,
) -> Result<(ErrorReport, Vec<(ExperimentSpec, ExperimentRun)>)> {
    let cells: Vec<ExperimentSpec> = js
        .iter()
        .enumerate()
        .flat_map(|(ji, &j)| {
            layers.iter().enumerate().map(move |(ni, &n)| {
                let c = (ji * layers.len() + ni) as u64;
                let mut spec = base.clone();
                spec.name = format!("{}_J{j}_N{n}", base.name);
                spec.n_obs = j;
                spec.n_layers = n;
                spec.seed = derive_seed(master_seed, c);
                spec.data_seed = Some(derive_seed(master_seed, u64::MAX / 2 + ji as u64));
                spec
            })
        })
        .collect();
    let runs: Vec<(ExperimentSpec, ExperimentRun)> = cells
        .into_par_iter()
        .map(|spec| run_experiment(&spec, allow_inverse_crime).map(|run| (spec, run)))
        .collect::<Result<_>>()?;
    let rows = runs
        .iter()
        .map(|(spec, run)| ErrorRow::from_document(&SummaryDocument::new(spec, run)))
        .collect::<Result<_>>()?;
    Ok((ErrorReport::new(rows)?, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::presets;

    fn row(j: usize, n: usize, l1: f64, gamma: f64, truth: Truth) -> ErrorRow {
        ErrorRow {
            name: format!("r{j}{n}"),
            n_obs: j,
            n_layers: n,
            l1,
            l2: l1 * 2.0,
            noise_std: gamma,
            truth,
            spec_hash: "00".into(),
            seed: 0,
        }
    }

    #[test]
    fn refuses_mismatched_rows() {
        let a = row(25, 1, 0.1, 0.02, Truth::Indicator1d);
        assert!(ErrorReport::new(vec![a.clone(), row(25, 2, 0.1, 0.03, Truth::Indicator1d)]).is_err());
        assert!(ErrorReport::new(vec![a.clone(), row(25, 2, 0.1, 0.02, Truth::Trig2d)]).is_err());
        assert!(ErrorReport::new(vec![a, row(50, 2, 0.1, 0.02, Truth::Indicator1d)]).is_ok());
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            row(25, 1, 0.0746, 0.02, Truth::Indicator1d),
            row(25, 2, 0.0658, 0.02, Truth::Indicator1d),
            row(50, 1, 0.0568, 0.02, Truth::Indicator1d),
            row(50, 2, 0.0339, 0.02, Truth::Indicator1d),
        ];
        let t = ErrorReport::new(rows).unwrap().table(ErrorNorm::L1);
        assert_eq!(
            t,
            "| J | 1 layer | 2 layers |\n|---|---|---|\n| 50 | 0.0568 | 0.0339 |\n| 25 | 0.0746 | 0.0658 |\n"
        );
    }

    #[test]
    fn small_report_runs_and_shares_data() {
        let mut base = presets::desk_1d(9, 1);
        base.sampling_mesh = 12;
        base.generation_mesh = 24;
        base.mcmc.samples = 80;
        base.mcmc.burn_in = 20;
        base.mcmc.adapt = false;
        let (report, runs) = run_report(&base, &[4, 9], &[1, 2], 5, false).unwrap();
        assert_eq!(report.rows.len(), 4);
        assert_eq!(runs[0].1.data, runs[1].1.data);
        assert_ne!(runs[0].1.data.y, runs[2].1.data.y);
        assert_ne!(runs[0].0.seed, runs[1].0.seed);
        let (again, _) = run_report(&base, &[4, 9], &[1, 2], 5, false).unwrap();
        assert_eq!(report, again);
    }
}
