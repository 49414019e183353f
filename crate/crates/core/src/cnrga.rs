//! Continuous non-revisiting genetic algorithm (cNrGA).
//!
//! Offspring come from binary tournament selection and uniform gene-exchange
//! crossover, which only recombines existing coordinate values. Every
//! candidate is routed through the [`BspArchive`]: a revisit is never
//! re-evaluated but replaced by a uniform sample from the revisited leaf's
//! cell (adaptive mutation), and a candidate inside a blocked region is
//! replaced by a uniform sample outside all blocked regions.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::BudgetedEvaluator;
use crate::bsp_archive::{BspArchive, InsertOutcome, NodeId, SearchPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub pop_size: usize,
    /// Probability that a parent pair is recombined rather than copied.
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub lru_enabled: bool,
    pub lru_fraction: f64,
    /// Memory threshold, in stored solutions, that triggers LRU pruning.
    pub lru_capacity: usize,
    /// Consecutive revisits tolerated for one candidate before falling back
    /// to a uniform domain sample.
    pub max_revisit_retries: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            pop_size: 100,
            crossover_rate: 0.5,
            tournament_size: 2,
            lru_enabled: false,
            lru_fraction: 0.5,
            lru_capacity: 10_000,
            max_revisit_retries: 100,
        }
    }
}

impl GaConfig {
    /// The cNrGA-LRU baseline configuration.
    pub fn lru() -> Self {
        GaConfig { lru_enabled: true, ..GaConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 2 {
            return Err(Error::Parameter(format!("pop_size must be at least 2, got {}", self.pop_size)));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Parameter(format!("crossover_rate must lie in [0, 1], got {}", self.crossover_rate)));
        }
        if self.tournament_size < 1 {
            return Err(Error::Parameter("tournament_size must be at least 1".into()));
        }
        if !(self.lru_fraction > 0.0 && self.lru_fraction < 1.0) {
            return Err(Error::Parameter(format!("lru_fraction must lie in (0, 1), got {}", self.lru_fraction)));
        }
        if self.lru_enabled && self.lru_capacity < 2 {
            return Err(Error::Parameter("lru_capacity must be at least 2".into()));
        }
        Ok(())
    }

    /// Consecutive blocked rejections after which the domain is considered
    /// fully blocked.
    pub fn max_reject(&self) -> usize {
        10 * self.pop_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaPopulation {
    pub individuals: Vec<SearchPoint>,
    pub generation: u64,
}

impl GaPopulation {
    pub fn best(&self) -> Option<&SearchPoint> {
        self.individuals.iter().min_by(|a, b| a.fitness.total_cmp(&b.fitness))
    }
}

/// A solution evaluated through the archive.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub point: SearchPoint,
    /// Leaf now owning the point.
    pub leaf: NodeId,
    /// Whether the submitted coordinates were replaced (revisit mutation or
    /// blocked-region resampling) before evaluation.
    pub replaced: bool,
}

/// Stores `coords` in the archive and evaluates it, replacing revisits and
/// blocked candidates until a fresh cell is found. Exactly one objective
/// evaluation is consumed on success.
pub fn evaluate_via_archive<R: Rng + ?Sized>(
    coords: &[f64],
    archive: &mut BspArchive,
    evaluator: &mut BudgetedEvaluator<'_>,
    rng: &mut R,
    config: &GaConfig,
) -> Result<Evaluated> {
    if evaluator.remaining() == 0 {
        return Err(Error::BudgetExhausted);
    }
    let mut x = coords.to_vec();
    let mut replaced = false;
    let mut revisits = 0;
    loop {
        let eval_index = evaluator.used() + 1;
        match archive.insert(&x, eval_index)? {
            InsertOutcome::NewLeaf { leaf, .. } => {
                let fitness = evaluator.evaluate(&x)?;
                archive.set_fitness(leaf, fitness)?;
                return Ok(Evaluated { point: SearchPoint { coords: x, fitness, eval_index }, leaf, replaced });
            }
            InsertOutcome::Revisit { leaf } => {
                revisits += 1;
                x = if revisits > config.max_revisit_retries {
                    archive.domain().sample_uniform(rng)
                } else {
                    archive.mutation_region(leaf)?.sample_uniform(rng)
                };
            }
            InsertOutcome::Blocked => x = sample_unblocked(archive, rng, config.max_reject())?,
        }
        replaced = true;
    }
}

fn sample_unblocked<R: Rng + ?Sized>(archive: &BspArchive, rng: &mut R, max_reject: usize) -> Result<Vec<f64>> {
    for _ in 0..max_reject {
        let x = archive.domain().sample_uniform(rng);
        if !archive.is_blocked_at(&x)? {
            return Ok(x);
        }
    }
    Err(Error::SearchSpaceExhausted)
}

/// Prunes the archive when it holds `lru_capacity` or more solutions.
/// Returns the number of leaves removed.
pub fn maybe_prune(archive: &mut BspArchive, config: &GaConfig) -> Result<usize> {
    if config.lru_enabled && archive.n_points() >= config.lru_capacity {
        archive.prune_lru(config.lru_fraction)
    } else {
        Ok(0)
    }
}

/// Binary (or k-ary) tournament, lower fitness wins.
fn tournament<'p, R: Rng + ?Sized>(pop: &'p [SearchPoint], size: usize, rng: &mut R) -> &'p SearchPoint {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.fitness < best.fitness {
            best = c;
        }
    }
    best
}

/// Uniform gene exchange: each coordinate is swapped between the two
/// children with probability 1/2.
fn crossover<R: Rng + ?Sized>(a: &[f64], b: &[f64], rate: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    if rng.random::<f64>() < rate {
        for i in 0..c1.len() {
            if rng.random::<bool>() {
                std::mem::swap(&mut c1[i], &mut c2[i]);
            }
        }
    }
    (c1, c2)
}

/// One evaluated offspring, as produced by [`Cnrga::next_offspring`].
#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub evaluated: Evaluated,
    /// True when this offspring completed the initial population or a
    /// generation.
    pub generation_completed: bool,
}

/// Resumable cNrGA: produces one evaluated offspring at a time so a caller
/// can suspend the search between any two evaluations.
#[derive(Debug, Clone)]
pub struct Cnrga {
    config: GaConfig,
    population: Vec<SearchPoint>,
    generation: u64,
    offspring: Vec<SearchPoint>,
    pending: VecDeque<Vec<f64>>,
}

impl Cnrga {
    /// Starts from an empty population; the first `pop_size` offspring are
    /// uniform samples of the domain.
    pub fn new(config: GaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Cnrga { config, population: Vec::new(), generation: 0, offspring: Vec::new(), pending: VecDeque::new() })
    }

    pub fn from_population(pop: GaPopulation, config: GaConfig) -> Result<Self> {
        config.validate()?;
        if pop.individuals.len() != config.pop_size {
            return Err(Error::Input(format!(
                "population has {} individuals, config expects {}",
                pop.individuals.len(),
                config.pop_size
            )));
        }
        if pop.individuals.iter().any(|p| !p.fitness.is_finite()) {
            return Err(Error::Input("population individuals must be evaluated".into()));
        }
        Ok(Cnrga {
            config,
            population: pop.individuals,
            generation: pop.generation,
            offspring: Vec::new(),
            pending: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &GaConfig {
        &self.config
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_initialized(&self) -> bool {
        !self.population.is_empty()
    }

    pub fn population(&self) -> GaPopulation {
        GaPopulation { individuals: self.population.clone(), generation: self.generation }
    }

    /// Evaluates the next offspring. Survivor selection is generational with
    /// one elite: after `pop_size - 1` offspring the best parent joins them
    /// as the next population.
    pub fn next_offspring<R: Rng + ?Sized>(
        &mut self,
        archive: &mut BspArchive,
        evaluator: &mut BudgetedEvaluator<'_>,
        rng: &mut R,
    ) -> Result<Offspring> {
        if self.pending.is_empty() {
            if self.population.is_empty() {
                let missing = self.config.pop_size - self.offspring.len();
                for _ in 0..missing {
                    self.pending.push_back(archive.domain().sample_uniform(rng));
                }
            } else {
                let a = tournament(&self.population, self.config.tournament_size, rng);
                let b = tournament(&self.population, self.config.tournament_size, rng);
                let (c1, c2) = crossover(&a.coords, &b.coords, self.config.crossover_rate, rng);
                self.pending.push_back(c1);
                if self.offspring.len() + 2 < self.config.pop_size {
                    self.pending.push_back(c2);
                }
            }
        }
        let x = self.pending.pop_front().expect("queue refilled above");
        let evaluated = evaluate_via_archive(&x, archive, evaluator, rng, &self.config)?;
        self.offspring.push(evaluated.point.clone());

        let generation_completed = if self.population.is_empty() {
            if self.offspring.len() == self.config.pop_size {
                self.population = std::mem::take(&mut self.offspring);
                true
            } else {
                false
            }
        } else if self.offspring.len() + 1 == self.config.pop_size {
            let elite = self
                .population
                .iter()
                .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
                .expect("population is non-empty")
                .clone();
            let mut next = Vec::with_capacity(self.config.pop_size);
            next.push(elite);
            next.append(&mut self.offspring);
            self.population = next;
            self.generation += 1;
            self.pending.clear();
            true
        } else {
            false
        };
        if generation_completed {
            maybe_prune(archive, &self.config)?;
        }
        Ok(Offspring { evaluated, generation_completed })
    }
}

/// Produces the next generation of `pop`. An error (including budget
/// exhaustion) discards the partially built generation.
pub fn ga_step<R: Rng + ?Sized>(
    pop: &GaPopulation,
    config: &GaConfig,
    archive: &mut BspArchive,
    evaluator: &mut BudgetedEvaluator<'_>,
    rng: &mut R,
) -> Result<GaPopulation> {
    let mut ga = Cnrga::from_population(pop.clone(), config.clone())?;
    while !ga.next_offspring(archive, evaluator, rng)?.generation_completed {}
    Ok(ga.population())
}
