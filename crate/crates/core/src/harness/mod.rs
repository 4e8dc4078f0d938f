//! Experiment harness: TOML configs, dataset ingestion, seeded runs with
//! checkpoints, summaries and plot data.

mod config;
mod dataset;
mod report;
mod run;

pub use config::{
    AgentSpec, Encoding, EnvironmentSpec, ExperimentConfig, LinearRuleKind, SweepParameter, SweepSpec, Variant,
};
pub use dataset::{ingest_dataset, ColumnKind, ColumnSpec, DatasetSchema};
pub use report::{
    collect_timing, emit_plot_data, mean_sd, plot_csv, plot_rows, summarize, AgentSummary, PlotRow, RunSummary,
    SeedMeta, SeedTiming,
};
pub use run::{AnyAgent, Experiment, Workload};

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "TREEBANDIT_OUTPUT_ROOT";

/// Loads, validates and runs the experiment at `config_path`, writing under
/// `output_root` (or the directory named by [`OUTPUT_ROOT_ENV`]).
pub fn run_experiment(config_path: &std::path::Path, output_root: &std::path::Path) -> crate::Result<RunSummary> {
    let config = ExperimentConfig::load(config_path)?;
    Experiment::prepare(&config, &output_root_or_env(output_root))?.run()
}

/// `TREEBANDIT_OUTPUT_ROOT` when set and non-empty, else `default`.
pub fn output_root_or_env(default: &std::path::Path) -> std::path::PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(v) if !v.is_empty() => v.into(),
        _ => default.to_path_buf(),
    }
}
