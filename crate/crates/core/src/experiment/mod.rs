//! Configuration, orchestration and persistence of runs and resolution sweeps.

mod config;
mod run;
mod sweep;

pub use config::{SolverConfig, SolverKind};
pub use run::{
    run, simulate, simulate_with, time_tag, timeseries_row, write_outputs, FileEntry, RunManifest,
    RunOutcome, TIMESERIES_HEADER,
};
pub use sweep::{
    simulate_all, summarize, sweep, sweep_configs, sweep_row, write_sweep, SweepRow, SweepSummary,
    TailFit, TrendChecks,
};
