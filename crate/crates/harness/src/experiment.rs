use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;

use histarch_core::{hr_restart::run_algorithm, make_suite, Algorithm, BudgetedEvaluator, Problem, RunRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::stats::{average_ranks, significance_mark, Mark, Summary};

/// Everything needed to reproduce an experiment. Serialized next to the
/// results so `stats` can recompute the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub dim: usize,
    pub suite_seed: u64,
    /// Restricts the suite to these problem names; empty means all.
    pub problems: Vec<String>,
    pub budget: u64,
    pub runs: usize,
    pub alpha: f64,
    pub base_seed: u64,
    /// Final errors below this are reported as zero.
    pub error_floor: f64,
    pub out: PathBuf,
    pub trace: bool,
    pub gnuplot: bool,
    pub dump_tree: bool,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithms: vec![Algorithm::Hr, Algorithm::Cmaes, Algorithm::CnrgaLru],
            dim: 10,
            suite_seed: 0,
            problems: Vec::new(),
            budget: 20_000,
            runs: 30,
            alpha: 0.05,
            base_seed: 0,
            error_floor: 1e-8,
            out: PathBuf::from("results"),
            trace: false,
            gnuplot: false,
            dump_tree: false,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return bad(format!("algorithm {a} listed twice"));
            }
        }
        if ![2, 10, 30].contains(&self.dim) {
            return bad(format!("unsupported suite dimension {}", self.dim));
        }
        if self.runs < 2 {
            return bad(format!("runs must be at least 2, got {}", self.runs));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        if !(self.error_floor >= 0.0) {
            return bad("error_floor must be non-negative".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        Ok(())
    }

    /// HR if selected, otherwise the first algorithm.
    pub fn reference(&self) -> Algorithm {
        if self.algorithms.contains(&Algorithm::Hr) { Algorithm::Hr } else { self.algorithms[0] }
    }

    pub fn suite(&self) -> Result<Vec<Problem>> {
        let suite = make_suite(self.dim, self.suite_seed)?;
        if self.problems.is_empty() {
            return Ok(suite);
        }
        for name in &self.problems {
            if !suite.iter().any(|p| p.name() == name) {
                return Err(HarnessError::Config(format!("unknown problem '{name}'")));
            }
        }
        Ok(suite.into_iter().filter(|p| self.problems.iter().any(|n| n == p.name())).collect())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// Outcome of one (problem, algorithm, run) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub problem: String,
    pub algorithm: Algorithm,
    pub run: usize,
    pub seed: u64,
    /// `None` when the run failed.
    pub final_error: Option<f64>,
    pub evals_used: u64,
    pub exploit_phases: usize,
    pub failure: Option<String>,
}

/// Full output of one cell, kept in memory for optional artifacts.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub entry: RunEntry,
    pub record: Option<RunRecord>,
    pub tree_dump: Option<String>,
}

pub fn final_error(best: f64, f_opt: Option<f64>, floor: f64) -> f64 {
    let e = match f_opt {
        Some(o) => (best - o).max(0.0),
        None => best,
    };
    if e.abs() < floor { 0.0 } else { e }
}

fn run_cell(config: &ExperimentConfig, problem: &Problem, algorithm: Algorithm, run: usize) -> CellOutput {
    let seed = config.run_seed(run);
    let mut entry = RunEntry {
        problem: problem.name().to_string(),
        algorithm,
        run,
        seed,
        final_error: None,
        evals_used: 0,
        exploit_phases: 0,
        failure: None,
    };
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut evaluator = BudgetedEvaluator::new(problem, config.budget);
        run_algorithm(algorithm, &mut evaluator, &mut rng)
    }));
    match outcome {
        Ok(Ok(out)) => {
            let rec = out.record;
            entry.evals_used = rec.evals_used;
            entry.exploit_phases = if algorithm == Algorithm::Hr { rec.exploit_phases().count() } else { 0 };
            match &rec.final_best {
                Some(b) => entry.final_error = Some(final_error(b.fitness, problem.f_opt(), config.error_floor)),
                None => entry.failure = Some("no evaluation performed".into()),
            }
            let tree_dump = if config.dump_tree { out.archive.map(|a| a.dump()) } else { None };
            CellOutput { entry, record: Some(rec), tree_dump }
        }
        Ok(Err(e)) => {
            entry.failure = Some(e.to_string());
            CellOutput { entry, record: None, tree_dump: None }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            entry.failure = Some(format!("panicked: {msg}"));
            CellOutput { entry, record: None, tree_dump: None }
        }
    }
}

/// Executes every cell on a pool of `config.workers` threads. Results are
/// returned in (problem, algorithm, run) order whatever the schedule.
pub fn run_cells(config: &ExperimentConfig) -> Result<(Vec<Problem>, Vec<CellOutput>)> {
    config.validate()?;
    let problems = config.suite()?;
    let mut cells = Vec::new();
    for p in 0..problems.len() {
        for &a in &config.algorithms {
            for r in 0..config.runs {
                cells.push((p, a, r));
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let outputs = pool.install(|| {
        cells
            .par_iter()
            .map(|&(p, a, r)| run_cell(config, &problems[p], a, r))
            .collect::<Vec<_>>()
    });
    for o in &outputs {
        if let Some(f) = &o.entry.failure {
            eprintln!(
                "warning: run {} of {} on {} failed and is excluded: {f}",
                o.entry.run, o.entry.algorithm, o.entry.problem
            );
        }
    }
    Ok((problems, outputs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub problem: String,
    pub algorithm: Algorithm,
    pub summary: Option<Summary>,
    pub failed: usize,
    pub rank: f64,
    /// Against the reference; `None` on the reference's own row.
    pub mark: Option<Mark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub algorithms: Vec<Algorithm>,
    pub reference: Algorithm,
    pub alpha: f64,
    pub problems: Vec<String>,
    /// Problem-major, algorithms in `algorithms` order.
    pub rows: Vec<TableRow>,
}

impl StatsTable {
    /// Aggregates run entries. Algorithms are ranked per problem by median
    /// final error (lower is better, ties share the average rank); a cell
    /// whose runs all failed ranks last.
    pub fn build(entries: &[RunEntry], problems: &[String], algorithms: &[Algorithm], reference: Algorithm, alpha: f64) -> Self {
        let mut rows = Vec::new();
        for problem in problems {
            let errors: Vec<Vec<f64>> = algorithms
                .iter()
                .map(|a| {
                    entries
                        .iter()
                        .filter(|e| &e.problem == problem && e.algorithm == *a)
                        .filter_map(|e| e.final_error)
                        .collect()
                })
                .collect();
            let key: Vec<f64> = errors
                .iter()
                .map(|v| Summary::of(v).map_or(f64::INFINITY, |s| s.median))
                .collect();
            let ranks = average_ranks(&key);
            let ref_idx = algorithms.iter().position(|a| *a == reference);
            for (i, a) in algorithms.iter().enumerate() {
                let failed = entries
                    .iter()
                    .filter(|e| &e.problem == problem && e.algorithm == *a && e.final_error.is_none())
                    .count();
                let mark = match ref_idx {
                    Some(r) if r != i => Some(significance_mark(&errors[r], &errors[i], alpha)),
                    _ => None,
                };
                rows.push(TableRow {
                    problem: problem.clone(),
                    algorithm: *a,
                    summary: Summary::of(&errors[i]),
                    failed,
                    rank: ranks[i],
                    mark,
                });
            }
        }
        StatsTable { algorithms: algorithms.to_vec(), reference, alpha, problems: problems.to_vec(), rows }
    }

    pub fn row(&self, problem: &str, algorithm: Algorithm) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.problem == problem && r.algorithm == algorithm)
    }

    pub fn average_rank(&self, algorithm: Algorithm) -> f64 {
        let ranks: Vec<f64> = self.rows.iter().filter(|r| r.algorithm == algorithm).map(|r| r.rank).collect();
        ranks.iter().sum::<f64>() / ranks.len() as f64
    }

    /// `(+, -)` counts of an algorithm's marks against the reference.
    pub fn mark_counts(&self, algorithm: Algorithm) -> (usize, usize) {
        let rows = self.rows.iter().filter(|r| r.algorithm == algorithm);
        rows.fold((0, 0), |(b, w), r| match r.mark {
            Some(Mark::Better) => (b + 1, w),
            Some(Mark::Worse) => (b, w + 1),
            _ => (b, w),
        })
    }
}

pub struct ExperimentResult {
    pub problems: Vec<Problem>,
    pub cells: Vec<CellOutput>,
    pub table: StatsTable,
}

impl ExperimentResult {
    pub fn entries(&self) -> Vec<RunEntry> {
        self.cells.iter().map(|c| c.entry.clone()).collect()
    }
}

/// Runs all cells and aggregates the table without touching the disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let (problems, cells) = run_cells(config)?;
    let entries: Vec<RunEntry> = cells.iter().map(|c| c.entry.clone()).collect();
    let names: Vec<String> = problems.iter().map(|p| p.name().to_string()).collect();
    let table = StatsTable::build(&entries, &names, &config.algorithms, config.reference(), config.alpha);
    Ok(ExperimentResult { problems, cells, table })
}
