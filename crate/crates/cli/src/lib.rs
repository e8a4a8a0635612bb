//! Experiment driver: benchmark curve, redistribution, simulation runs and
//! CSV/SVG output.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, SweepEntry};
pub use run::{run, RunRecord};

use rayon::prelude::*;

/// Runs every entry of a sweep in parallel. Records come back in input
/// order; each run owns its own output directory.
pub fn run_sweep(entries: &[SweepEntry]) -> Vec<(String, std::io::Result<RunRecord>)> {
    entries
        .par_iter()
        .map(|e| (e.name.clone(), run::run(&e.config)))
        .collect()
}
