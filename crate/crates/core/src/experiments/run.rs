//! End-to-end experiment runs with optional checkpointing.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use super::data::{generate_data, GeneratedData};
use super::spec::ExperimentSpec;
use crate::error::{Error, Result};
use crate::inference::{ChainRecord, DeepPrior, PosteriorSummary, Sampler};

/// Where and how often to checkpoint a chain.
#[derive(Clone, Debug)]
pub struct CheckpointPlan {
    pub path: PathBuf,
    pub every: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub spec_hash: String,
    pub data: GeneratedData,
    pub summary: PosteriorSummary,
    pub record: ChainRecord,
}

pub fn run_experiment(spec: &ExperimentSpec, allow_inverse_crime: bool) -> Result<ExperimentRun> {
    run_experiment_with(spec, allow_inverse_crime, None)
}

/// Runs `spec`. With a checkpoint plan the sampler resumes from an existing
/// checkpoint file and rewrites it every `every` steps; results are identical
/// to an uninterrupted run.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    allow_inverse_crime: bool,
    checkpoint: Option<&CheckpointPlan>,
) -> Result<ExperimentRun> {
    spec.validate(allow_inverse_crime)?;
    let hash = spec.hash()?;
    let data = generate_data(spec)?;
    let dataset = data.dataset(spec)?;
    let prior = DeepPrior::new(spec.construction.clone(), spec.sampling_grid()?, spec.seed)?;
    let mut sampler = match checkpoint {
        Some(plan) if plan.path.exists() => {
            let file = File::open(&plan.path)?;
            Sampler::resume(BufReader::new(file), &prior, &dataset, spec.mcmc.clone(), spec.n_layers, spec.seed, hash)?
        }
        _ => Sampler::new(&prior, &dataset, spec.mcmc.clone(), spec.n_layers, spec.seed, hash)?,
    };
    match checkpoint {
        Some(plan) => {
            if plan.every == 0 {
                return Err(Error::Config("checkpoint interval must be positive".into()));
            }
            while !sampler.is_finished() {
                sampler.run_steps(plan.every)?;
                save_checkpoint(&sampler, &plan.path)?;
            }
        }
        None => sampler.run_to_end()?,
    }
    let summary = sampler.summary(Some(&data.truth_sampling))?;
    Ok(ExperimentRun { spec_hash: super::spec::hex(&hash), data, summary, record: sampler.record().clone() })
}

fn save_checkpoint(sampler: &Sampler<'_>, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        sampler.write_checkpoint(&mut w)?;
        std::io::Write::flush(&mut w)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::presets;

    fn small() -> ExperimentSpec {
        let mut s = presets::desk_1d(10, 2);
        s.sampling_mesh = 20;
        s.generation_mesh = 40;
        s.mcmc.samples = 300;
        s.mcmc.burn_in = 100;
        s.mcmc.adapt_window = 50;
        s.mcmc.quantile_store = 50;
        s
    }

    #[test]
    fn checkpointed_run_matches_plain_run() {
        let spec = small();
        let plain = run_experiment(&spec, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let plan = CheckpointPlan { path: dir.path().join("chain.ckpt"), every: 70 };
        let ck = run_experiment_with(&spec, false, Some(&plan)).unwrap();
        assert_eq!(plain.summary, ck.summary);
        // Re-running against the finished checkpoint only rebuilds the summary.
        let again = run_experiment_with(&spec, false, Some(&plan)).unwrap();
        assert_eq!(plain.summary, again.summary);
        let mut other = spec.clone();
        other.noise_std = 0.05;
        assert!(matches!(run_experiment_with(&other, false, Some(&plan)), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn errors_are_reported() {
        let run = run_experiment(&small(), false).unwrap();
        assert!(run.summary.l1_error.unwrap() > 0.0);
        // On the unit domain ‖·‖_{L¹} ≤ ‖·‖_{L²}.
        assert!(run.summary.l2_error.unwrap() >= run.summary.l1_error.unwrap() - 1e-12);
        assert_eq!(run.spec_hash.len(), 64);
    }
}
