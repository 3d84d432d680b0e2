//! Batch execution of independent scenarios.
//!
//! Scenarios never share mutable state — every run derives all of its
//! randomness from its own seed — so a batch is embarrassingly parallel.
//! With the `parallel` feature (on by default) batches fan out across the
//! rayon pool; without it the same API runs sequentially. Results preserve
//! input order either way, and each record is bit-identical to what a lone
//! [`run_scenario`] call would produce, so enabling parallelism never
//! changes any output.

use crate::config::ScenarioConfig;
use crate::scenario::{run_scenario, RunRecord, ScenarioError};

/// Per-seed variants of a base configuration, in the given order.
pub fn with_seeds(base: &ScenarioConfig, seeds: &[u64]) -> Vec<ScenarioConfig> {
    seeds
        .iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg
        })
        .collect()
}

/// Runs every scenario in order on the current thread.
pub fn run_batch_sequential(
    configs: &[ScenarioConfig],
) -> Result<Vec<RunRecord>, ScenarioError> {
    configs.iter().map(run_scenario).collect()
}

/// Runs the batch on the rayon pool, preserving input order.
#[cfg(feature = "parallel")]
pub fn run_batch_parallel(
    configs: &[ScenarioConfig],
) -> Result<Vec<RunRecord>, ScenarioError> {
    use rayon::prelude::*;
    configs.par_iter().map(run_scenario).collect()
}

/// Parallel when built with the `parallel` feature, sequential otherwise.
/// If any run fails, one of the failures is returned and the rest of the
/// batch is abandoned.
pub fn run_batch(configs: &[ScenarioConfig]) -> Result<Vec<RunRecord>, ScenarioError> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(configs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(configs)
    }
}
