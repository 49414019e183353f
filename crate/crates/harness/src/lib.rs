//! Experiment harness: seeded repeated runs of each algorithm on the
//! benchmark suite, summary statistics, per-problem ranks and pairwise
//! significance marks against a reference algorithm.

pub mod error;
pub mod experiment;
pub mod output;
pub mod stats;

pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentResult, RunEntry, StatsTable, TableRow};
pub use stats::{kruskal_wallis, significance_mark, Mark, Summary};
