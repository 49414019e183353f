//! History-assisted restart CMA-ES.
//!
//! A continuous non-revisiting genetic algorithm (cNrGA) explores the search
//! domain while every evaluated solution is recorded in a binary space
//! partitioning tree ([`BspArchive`]). Densely sampled cells of that tree are
//! handed to CMA-ES as restart regions; once exploited they are blocked for
//! the GA so the same region is never suggested twice.
//!
//! Modules:
//!
//! - [`bsp_archive`]: the search-history tree, revisit detection, region
//!   blocking and LRU pruning.
//! - [`cnrga`]: the non-revisiting GA that routes every evaluation through
//!   the archive.
//! - [`cmaes`]: a self-contained CMA-ES with the restart-relevant stopping
//!   criteria.
//! - [`hr_restart`]: the orchestrator (HR-CMA-ES) and the two baselines.
//! - [`benchmarks`]: desk-scale test functions and a budget-counting
//!   evaluator.

pub mod benchmarks;
pub mod bsp_archive;
pub mod cmaes;
pub mod cnrga;
mod error;
pub mod hr_restart;

pub use benchmarks::{make_suite, BudgetedEvaluator, Category, Problem, ProblemManifest};
pub use bsp_archive::{BspArchive, InsertOutcome, NodeId, Region, RoiSuggestion, SearchPoint};
pub use cmaes::{default_lambda, CmaState, StopCriteria, StopReason};
pub use cnrga::{Cnrga, GaConfig, GaPopulation};
pub use error::{Error, Result};
pub use hr_restart::{
    derive_depth_params, hr_run, hr_run_with, run_algorithm, run_baseline, Algorithm, HrConfig, Phase,
    PhaseKind, RunOutcome, RunRecord,
    Termination,
};
