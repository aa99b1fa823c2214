//! Experiment orchestration: configs, named settings, seeded runs, sweeps.

pub mod config;
pub mod problem;
pub mod run;
pub mod sweep;

pub use config::{Algo, ExperimentConfig, LrConfig, LrOverride, Setting, SweepSpec};
pub use problem::{named_problem, resolve_problem, ProblemSpec};
pub use run::{
    csv_bytes, provenance_lines, run_experiment, run_records, run_rng, run_single, ExperimentOutput, PreparedProblem,
};
pub use sweep::{run_sweep, summary_csv, SweepOutput, SweepRow, SELECTION_STEP};
