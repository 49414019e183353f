//! HR-CMA-ES: CMA-ES restarted in regions of interest found by cNrGA.
//!
//! cNrGA explores and records every evaluation in the BSP archive. As soon as
//! a new leaf reaches depth `lv + k` the GA is suspended and CMA-ES is
//! started from the mean of all leaves under the leaf's depth-`lv` ancestor
//! (the sub-root), with a step size proportional to the sub-root's widest
//! side. When CMA-ES stops the sub-root is blocked for the GA, which then
//! resumes its suspended population. CMA-ES evaluations bypass the archive
//! and may land inside blocked regions.
//!
//! The two baselines share the budget accounting and [`RunRecord`] schema:
//! plain restarting CMA-ES (uniform random restarts, fixed lambda) and cNrGA
//! with or without LRU pruning.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{BudgetedEvaluator, Problem};
use crate::bsp_archive::{BspArchive, Region, RoiSuggestion, SearchPoint};
use crate::cmaes::{default_lambda, run_until_stop, CmaState, StopCriteria, StopReason};
use crate::cnrga::{Cnrga, GaConfig};
use crate::error::{Error, Result};

/// Step size factor applied to the widest side of a restart region.
pub const SIGMA_FACTOR: f64 = 0.3;

fn ceil_log2(n: u64) -> u32 {
    if n <= 1 { 0 } else { 64 - (n - 1).leading_zeros() }
}

/// `(lv, k) = (ceil(log2 budget), ceil(log2 lambda))`.
pub fn derive_depth_params(budget: u64, lambda: usize) -> (u32, u32) {
    (ceil_log2(budget), ceil_log2(lambda as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrConfig {
    pub budget: u64,
    pub lambda: usize,
    pub lv: u32,
    pub k: u32,
    pub ga: GaConfig,
    pub sigma_factor: f64,
    pub stop: StopCriteria,
}

impl HrConfig {
    /// Defaults for a `dim`-dimensional problem: lambda from the dimension,
    /// depth thresholds from budget and lambda, LRU pruning off.
    pub fn new(dim: usize, budget: u64) -> Result<Self> {
        let lambda = default_lambda(dim)?;
        let (lv, k) = derive_depth_params(budget, lambda);
        Ok(HrConfig {
            budget,
            lambda,
            lv,
            k,
            ga: GaConfig::default(),
            sigma_factor: SIGMA_FACTOR,
            stop: StopCriteria::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        if self.ga.lru_enabled {
            return Err(Error::Parameter("HR-CMA-ES blocks exploited regions instead of LRU pruning".into()));
        }
        if self.budget < self.ga.pop_size as u64 {
            return Err(Error::Parameter(format!(
                "budget {} leaves no room for one GA generation of {}",
                self.budget, self.ga.pop_size
            )));
        }
        if self.lambda < 2 {
            return Err(Error::Parameter("lambda must be at least 2".into()));
        }
        if !(self.sigma_factor > 0.0) {
            return Err(Error::Parameter("sigma_factor must be positive".into()));
        }
        Ok(())
    }
}

/// CMA-ES state for a restart in `roi`: mean of the seeds, identity
/// covariance, `sigma0 = sigma_factor * (widest side of the region)`.
pub fn seed_cma_from_roi(
    roi: &RoiSuggestion,
    lambda: usize,
    sigma_factor: f64,
    domain: &Region,
) -> Result<CmaState> {
    let Some(first) = roi.seeds.first() else {
        return Err(Error::Structural("region of interest has no seeds".into()));
    };
    let dim = first.coords.len();
    let mut mean = vec![0.0; dim];
    for s in &roi.seeds {
        for (m, c) in mean.iter_mut().zip(&s.coords) {
            *m += c;
        }
    }
    let n = roi.seeds.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    // Rounding can push the mean of seeds on a cell face just outside it.
    roi.region.clamp(&mut mean);
    CmaState::new(&mean, sigma_factor * roi.region.max_side(), lambda, domain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Explore,
    Exploit,
}

/// A contiguous block of evaluations `start..=end` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub start: u64,
    pub end: u64,
    /// Restart region of an HR exploit phase.
    pub roi: Option<Region>,
    pub stop: Option<StopReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    SearchSpaceExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub problem: String,
    /// `(eval_index, best_so_far)` at every improvement.
    pub best_fitness_trace: Vec<(u64, f64)>,
    pub phases: Vec<Phase>,
    pub final_best: Option<SearchPoint>,
    pub evals_used: u64,
    pub budget: u64,
    pub termination: Termination,
}

impl RunRecord {
    fn from_evaluator(algorithm: Algorithm, evaluator: &BudgetedEvaluator<'_>, phases: Vec<Phase>, termination: Termination) -> Self {
        RunRecord {
            algorithm: algorithm.to_string(),
            problem: evaluator.problem().name().to_string(),
            best_fitness_trace: evaluator.trace().to_vec(),
            phases,
            final_best: evaluator.best().cloned(),
            evals_used: evaluator.used(),
            budget: evaluator.budget(),
            termination,
        }
    }

    pub fn exploit_phases(&self) -> impl Iterator<Item = &Phase> {
        self.phases.iter().filter(|p| p.kind == PhaseKind::Exploit)
    }
}

/// Appends a phase covering evaluations after the previous phase up to `end`,
/// unless it would be empty.
fn close_phase(phases: &mut Vec<Phase>, kind: PhaseKind, end: u64, roi: Option<Region>, stop: Option<StopReason>) {
    let start = phases.last().map_or(1, |p| p.end + 1);
    if end >= start {
        phases.push(Phase { kind, start, end, roi, stop });
    }
}

/// Result of a run that kept its archive (HR and cNrGA variants).
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub archive: Option<BspArchive>,
}

/// Runs HR-CMA-ES on `problem` with a fresh evaluator.
pub fn hr_run<R: Rng + ?Sized>(problem: &Problem, config: &HrConfig, rng: &mut R) -> Result<RunRecord> {
    let mut evaluator = BudgetedEvaluator::new(problem, config.budget);
    Ok(hr_run_with(&mut evaluator, config, rng)?.record)
}

/// Runs HR-CMA-ES against a caller-provided evaluator (which may record the
/// full evaluation history). `config.budget` is ignored in favour of the
/// evaluator's own budget.
pub fn hr_run_with<R: Rng + ?Sized>(
    evaluator: &mut BudgetedEvaluator<'_>,
    config: &HrConfig,
    rng: &mut R,
) -> Result<RunOutcome> {
    config.validate()?;
    let domain = evaluator.problem().domain().clone();
    let mut archive = BspArchive::new(domain.clone()).with_roi_depths(config.lv, config.k);
    let mut ga = Cnrga::new(config.ga.clone())?;
    let mut phases = Vec::new();

    let termination = loop {
        let offspring = match ga.next_offspring(&mut archive, evaluator, rng) {
            Ok(o) => o,
            Err(Error::BudgetExhausted) => break Termination::BudgetExhausted,
            Err(Error::SearchSpaceExhausted) => break Termination::SearchSpaceExhausted,
            Err(e) => return Err(e),
        };
        let Some(roi) = archive.roi_trigger(offspring.evaluated.leaf)? else { continue };

        close_phase(&mut phases, PhaseKind::Explore, evaluator.used(), None, None);
        let mut state = seed_cma_from_roi(&roi, config.lambda, config.sigma_factor, &domain)?
            .with_criteria(config.stop);
        let run = run_until_stop(&mut state, evaluator, rng)?;
        archive.block(roi.subroot)?;
        close_phase(&mut phases, PhaseKind::Exploit, evaluator.used(), Some(roi.region), Some(run.stop));
        if run.stop == StopReason::BudgetExhausted {
            break Termination::BudgetExhausted;
        }
    };
    close_phase(&mut phases, PhaseKind::Explore, evaluator.used(), None, None);

    Ok(RunOutcome {
        record: RunRecord::from_evaluator(Algorithm::Hr, evaluator, phases, termination),
        archive: Some(archive),
    })
}

/// Algorithm identifiers shared by the runner and the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// HR-CMA-ES.
    Hr,
    /// CMA-ES restarted from uniform random means with a fixed lambda.
    #[serde(alias = "cmaes_restart")]
    Cmaes,
    /// cNrGA with LRU pruning.
    CnrgaLru,
    /// cNrGA without pruning.
    Cnrga,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Hr, Algorithm::Cmaes, Algorithm::CnrgaLru, Algorithm::Cnrga];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Hr => "hr",
            Algorithm::Cmaes => "cmaes",
            Algorithm::CnrgaLru => "cnrga_lru",
            Algorithm::Cnrga => "cnrga",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hr" | "hr_cmaes" => Ok(Algorithm::Hr),
            "cmaes" | "cmaes_restart" => Ok(Algorithm::Cmaes),
            "cnrga_lru" => Ok(Algorithm::CnrgaLru),
            "cnrga" => Ok(Algorithm::Cnrga),
            other => Err(Error::Parameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Restarting CMA-ES: every non-budget stop starts a new instance from a
/// uniform random mean with `sigma0 = 0.3 * (widest domain side)`.
pub fn run_cmaes_restart<R: Rng + ?Sized>(
    evaluator: &mut BudgetedEvaluator<'_>,
    lambda: usize,
    criteria: StopCriteria,
    rng: &mut R,
) -> Result<RunRecord> {
    let domain = evaluator.problem().domain().clone();
    let sigma0 = SIGMA_FACTOR * domain.max_side();
    let mut phases = Vec::new();
    loop {
        let mean = domain.sample_uniform(rng);
        let mut state = CmaState::new(&mean, sigma0, lambda, &domain)?.with_criteria(criteria);
        let run = run_until_stop(&mut state, evaluator, rng)?;
        close_phase(&mut phases, PhaseKind::Exploit, evaluator.used(), None, Some(run.stop));
        if run.stop == StopReason::BudgetExhausted {
            break;
        }
    }
    Ok(RunRecord::from_evaluator(Algorithm::Cmaes, evaluator, phases, Termination::BudgetExhausted))
}

/// cNrGA alone; LRU pruning follows `config.lru_enabled`.
pub fn run_cnrga<R: Rng + ?Sized>(
    evaluator: &mut BudgetedEvaluator<'_>,
    config: &GaConfig,
    rng: &mut R,
) -> Result<RunOutcome> {
    let mut archive = BspArchive::new(evaluator.problem().domain().clone());
    let mut ga = Cnrga::new(config.clone())?;
    let termination = loop {
        match ga.next_offspring(&mut archive, evaluator, rng) {
            Ok(_) => {}
            Err(Error::BudgetExhausted) => break Termination::BudgetExhausted,
            Err(Error::SearchSpaceExhausted) => break Termination::SearchSpaceExhausted,
            Err(e) => return Err(e),
        }
    };
    let mut phases = Vec::new();
    close_phase(&mut phases, PhaseKind::Explore, evaluator.used(), None, None);
    let algorithm = if config.lru_enabled { Algorithm::CnrgaLru } else { Algorithm::Cnrga };
    Ok(RunOutcome {
        record: RunRecord::from_evaluator(algorithm, evaluator, phases, termination),
        archive: Some(archive),
    })
}

/// Runs any algorithm with its default configuration.
pub fn run_algorithm<R: Rng + ?Sized>(
    algorithm: Algorithm,
    evaluator: &mut BudgetedEvaluator<'_>,
    rng: &mut R,
) -> Result<RunOutcome> {
    let dim = evaluator.problem().dim();
    match algorithm {
        Algorithm::Hr => hr_run_with(evaluator, &HrConfig::new(dim, evaluator.budget())?, rng),
        Algorithm::Cmaes => Ok(RunOutcome {
            record: run_cmaes_restart(evaluator, default_lambda(dim)?, StopCriteria::default(), rng)?,
            archive: None,
        }),
        Algorithm::CnrgaLru => run_cnrga(evaluator, &GaConfig::lru(), rng),
        Algorithm::Cnrga => run_cnrga(evaluator, &GaConfig::default(), rng),
    }
}

/// Runs a baseline by id (`cmaes_restart`/`cmaes`, `cnrga_lru`, `cnrga`).
pub fn run_baseline<R: Rng + ?Sized>(problem: &Problem, algo: &str, budget: u64, rng: &mut R) -> Result<RunRecord> {
    let algorithm: Algorithm = algo.parse()?;
    if algorithm == Algorithm::Hr {
        return Err(Error::Parameter("hr is not a baseline; use hr_run".into()));
    }
    let mut evaluator = BudgetedEvaluator::new(problem, budget);
    Ok(run_algorithm(algorithm, &mut evaluator, rng)?.record)
}
