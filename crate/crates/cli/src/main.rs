use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deepgp::experiments::{
    diagnose, plot, presets, run_experiment_with, run_report, write_data_csv, write_layer_csv, write_summary_csv,
    write_trace_csv, ChainSpec, CheckpointPlan, ErrorNorm, ErrorReport, ErrorRow, ExperimentSpec, SummaryDocument,
};
use deepgp::Error;

#[derive(Parser)]
#[command(name = "deepgp", version, about = "Sample, diagnose and fit deep Gaussian process priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one chain from a chain spec and write one CSV per layer plus a manifest.
    SamplePrior(SamplePrior),
    /// Run the depth diagnostics that match the chain's construction.
    Diagnose(Diagnose),
    /// Run posterior inference for an experiment spec.
    Infer(Infer),
    /// Run or aggregate an error table over observation counts and depths.
    Report(Report),
    /// Render a CSV artifact as SVG.
    Plot(Plot),
}

#[derive(Args)]
struct ChainOverrides {
    /// Chain spec (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SamplePrior {
    #[command(flatten)]
    chain: ChainOverrides,
    /// Output directory.
    #[arg(long, default_value = "prior")]
    out: PathBuf,
}

#[derive(Args)]
struct Diagnose {
    #[command(flatten)]
    chain: ChainOverrides,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output JSON file.
    #[arg(long, default_value = "diagnostic.json")]
    out: PathBuf,
}

#[derive(Args)]
struct Infer {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "inference")]
    out: PathBuf,
    /// Permit generation and sampling on the same mesh.
    #[arg(long)]
    allow_inverse_crime: bool,
    /// Checkpoint file; an existing one is resumed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    checkpoint_every: u64,
}

#[derive(Args)]
struct Report {
    /// Base experiment spec (TOML).
    #[arg(long, conflicts_with_all = ["preset", "from"])]
    spec: Option<PathBuf>,
    /// Built-in base spec: desk_1d, full_1d, desk_2d or full_2d.
    #[arg(long, conflicts_with = "from")]
    preset: Option<String>,
    /// Aggregate existing summary JSON files instead of running.
    #[arg(long, num_args = 1..)]
    from: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [25, 50, 100])]
    js: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
    layers: Vec<usize>,
    /// Master seed for the per-cell seeds.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    allow_inverse_crime: bool,
    /// Output directory.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct Plot {
    /// CSV artifact written by another subcommand.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Column to draw; defaults to mean and truth, or the first value column.
    #[arg(long)]
    column: Option<String>,
    #[arg(long)]
    title: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SamplePrior(a) => sample_prior(a),
        Command::Diagnose(a) => run_diagnose(a),
        Command::Infer(a) => infer(a),
        Command::Report(a) => report(a),
        Command::Plot(a) => run_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Error> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| Error::InvalidInput(e.to_string()))
}

fn load_chain(o: &ChainOverrides) -> Result<ChainSpec, Error> {
    let mut spec = ChainSpec::from_toml(&read(&o.config)?)?;
    if let Some(d) = o.depth {
        spec.depth = d;
    }
    if let Some(s) = o.seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn sample_prior(a: SamplePrior) -> Result<(), Error> {
    let spec = load_chain(&a.chain)?;
    let grid = spec.config()?.grid;
    let hash = spec.hash_hex()?;
    let traj = spec.sample()?;
    fs::create_dir_all(&a.out)?;
    let mut files = Vec::new();
    for (n, layer) in traj.layers.iter().enumerate() {
        let name = format!("layer_{n:03}.csv");
        write_layer_csv(&grid, layer, &hash, spec.seed, create(&a.out.join(&name))?)?;
        files.push(name);
    }
    let manifest = serde_json::json!({
        "spec_hash": hash,
        "seed": spec.seed,
        "depth": spec.depth,
        "nodes": grid.len(),
        "construction": spec.construction,
        "files": files,
        "stats": traj.stats,
    });
    write(&a.out.join("manifest.json"), &to_json(&manifest)?)
}

fn run_diagnose(a: Diagnose) -> Result<(), Error> {
    let mut spec = load_chain(&a.chain)?;
    if let Some(r) = a.replicas {
        spec.replicas = r;
    }
    write(&a.out, &to_json(&diagnose(&spec)?)?)
}

fn infer(a: Infer) -> Result<(), Error> {
    let mut spec = ExperimentSpec::from_toml(&read(&a.spec)?)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let plan = a.checkpoint.map(|path| CheckpointPlan { path, every: a.checkpoint_every });
    let run = run_experiment_with(&spec, a.allow_inverse_crime, plan.as_ref())?;
    fs::create_dir_all(&a.out)?;
    let doc = SummaryDocument::new(&spec, &run);
    write(&a.out.join("summary.json"), &(doc.to_json()? + "\n"))?;
    write_summary_csv(&doc, run.data.truth_sampling.as_slice(), create(&a.out.join("summary.csv"))?)?;
    write_data_csv(&spec, &run, create(&a.out.join("data.csv"))?)?;
    write_trace_csv(&spec, &run, create(&a.out.join("trace.csv"))?)?;
    Ok(())
}

fn report(a: Report) -> Result<(), Error> {
    fs::create_dir_all(&a.out)?;
    let report = if !a.from.is_empty() {
        let rows = a
            .from
            .iter()
            .map(|p| ErrorRow::from_document(&SummaryDocument::from_json(&read(p)?)?))
            .collect::<Result<Vec<_>, _>>()?;
        ErrorReport::new(rows)?
    } else {
        let mut base = match (&a.spec, &a.preset) {
            (Some(p), _) => ExperimentSpec::from_toml(&read(p)?)?,
            (None, Some(name)) => presets::by_name(name, a.js[0], 1)
                .ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?,
            (None, None) => return Err(Error::Config("report needs --spec, --preset or --from".into())),
        };
        if let Some(s) = a.samples {
            base.mcmc.samples = s;
        }
        if let Some(b) = a.burn_in {
            base.mcmc.burn_in = b;
        }
        let (report, runs) = run_report(&base, &a.js, &a.layers, a.seed, a.allow_inverse_crime)?;
        for (spec, run) in &runs {
            let doc = SummaryDocument::new(spec, run);
            write(&a.out.join(format!("{}.json", spec.name)), &(doc.to_json()? + "\n"))?;
        }
        report
    };
    write(&a.out.join("report.csv"), &report.to_csv())?;
    write(&a.out.join("table_l1.md"), &report.table(ErrorNorm::L1))?;
    write(&a.out.join("table_l2.md"), &report.table(ErrorNorm::L2))?;
    print!("{}", report.table(ErrorNorm::L1));
    Ok(())
}

fn run_plot(a: Plot) -> Result<(), Error> {
    let table = plot::Table::parse(&read(&a.input)?)?;
    let title = a.title.unwrap_or_else(|| a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    write(&a.output, &plot::auto_plot(&table, a.column.as_deref(), &title)?)
}
