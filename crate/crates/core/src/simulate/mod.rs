//! Simulation designs with known potential outcomes, finite-population
//! truths, exact identity checks, and the Monte Carlo harness.

mod dgp;
mod identities;
mod monte_carlo;
mod truth;

pub use dgp::{
    generate, lambda, rho, tau, Assignment, BlockPlacement, Design, DgpConfig, Draw,
    PotentialOutcomes, BLOCK12_PATTERN, COHORTS, N_PERIODS,
};
pub use identities::{did_decomposition, verify_unit_taxonomy, DidDecomposition};
pub use monte_carlo::{
    format_tables, run_monte_carlo, run_replication, run_replication_with, serial_sums, summarize,
    McConfig, McReport, McRow, Method, MethodOutcome, ReplicationRecord,
};
pub use truth::{finite_population_truth, CellTruth, EventTruth, TruthTable};
