//! The rollout-budget sweep: seeded trials per (estimator, rollout count),
//! bias/variance/RMSE against the exact gradient, CSV and SVG output.

mod config;
mod plot;
mod report;
mod sweep;

pub use config::{EstimatorSpec, ExperimentConfig, MdpSpec, NChainSpec, QTargetMode};
pub use plot::{emit_plot, render_svg};
pub use report::{read_csv, write_csv, write_csv_to, CellSummary};
pub use sweep::{
    grad_compare, run_sweep, run_trial, trial_seed, CellStats, CompareRow, ExperimentContext,
    SweepResult,
};
