//! Regression experiments: specs, synthetic data, error metrics, reports and plots.

mod chain;
mod data;
mod metrics;
mod output;
pub mod plot;
pub mod presets;
mod report;
mod run;
mod spec;

pub use chain::{diagnose, write_layer_csv, ChainSpec, Diagnostic, DiagnosticDocument, ModeSummary};
pub use data::{
    generate_data, indicator_1d, observation_points, restrict, trig_2d, truth_on_grid, GeneratedData, DATA_STREAM,
};
pub use metrics::{compute_error, ErrorNorm};
pub use output::{write_data_csv, write_summary_csv, write_trace_csv, SummaryDocument};
pub use report::{derive_seed, run_report, ErrorReport, ErrorRow};
pub use run::{run_experiment, run_experiment_with, CheckpointPlan, ExperimentRun};
pub use spec::{hex, ExperimentSpec, ObsLayout, Truth};
