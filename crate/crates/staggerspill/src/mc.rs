//! Replications spread over a rayon pool. Each replication draws from its own
//! seeded stream and results are summarized in replication order, so reports
//! do not depend on the number of threads.

use rayon::prelude::*;
use staggerspill_core::inference::ShacPlan;
use staggerspill_core::simulate::{run_replication, summarize, McConfig, McReport, ReplicationRecord};
use staggerspill_core::Result as CoreResult;

use crate::error::{CliError, Result};

pub type Replication = (u64, CoreResult<ReplicationRecord>);
pub type Replications = Vec<Replication>;

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::io(format!("cannot start worker threads: {e}")))
}

pub fn run_parallel(cfg: &McConfig, pool: &rayon::ThreadPool) -> Result<(McReport, Replications)> {
    if cfg.reps == 0 {
        return Err(CliError::validation("reps must be positive"));
    }
    let results: Replications = pool.install(|| {
        (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| (r, run_replication(cfg, r)))
            .collect()
    });
    Ok((summarize(cfg, &results), results))
}

/// Per-unit spatial neighbour sums evaluated in parallel, returned in unit order.
pub fn parallel_sums(
    plan: &ShacPlan,
    rows: &staggerspill_core::inference::DMatrix<f64>,
) -> Vec<Vec<f64>> {
    (0..plan.n())
        .into_par_iter()
        .map(|i| plan.neighbour_sum(rows, i))
        .collect()
}
