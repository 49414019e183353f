//! CMA-ES with rank-one and rank-mu covariance updates and cumulative
//! step-size adaptation.
//!
//! Candidates are drawn as `m + sigma * B * diag(d) * z` with `z ~ N(0, I)`,
//! where `C = B diag(d^2) B^T` is refreshed lazily. Out-of-domain candidates
//! are resampled; after 100 failed tries a candidate is clamped onto the
//! box. Absorbing-only boundary handling is avoided because it piles
//! solutions up on the boundary.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::benchmarks::BudgetedEvaluator;
use crate::bsp_archive::{Region, SearchPoint};
use crate::error::{Error, Result};

const MAX_RESAMPLES: usize = 100;

/// Recommended population size `4 + floor(3 ln D)`.
pub fn default_lambda(dim: usize) -> Result<usize> {
    if dim < 1 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    Ok(4 + (3.0 * (dim as f64).ln()).floor() as usize)
}

/// Length of the best-value history used by the stagnation test:
/// `10 + ceil(30 D / lambda)` generations.
pub fn stagnation_window(dim: usize, lambda: usize) -> usize {
    10 + (30 * dim).div_ceil(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    BudgetExhausted,
    CovCondition,
    Stagnation,
    TolFun,
    TolX,
}

/// Thresholds of the non-budget stopping criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Stop when `cond(C)` exceeds this.
    pub cond_limit: f64,
    /// Stop when the per-generation best values over a full stagnation
    /// window span at most this.
    pub tol_fun_hist: f64,
    /// Stop when the window of best values together with the current
    /// generation's values span at most this. `None` disables it.
    pub tol_fun: Option<f64>,
    /// Stop when `sigma * max(|p_c_i|, sqrt(C_ii)) < tol_x_factor * sigma0`
    /// in every coordinate. `None` disables it.
    pub tol_x_factor: Option<f64>,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria { cond_limit: 1e14, tol_fun_hist: 1e-12, tol_fun: Some(1e-12), tol_x_factor: Some(1e-12) }
    }
}

/// Strategy constants derived from `(D, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    /// `E||N(0, I)||`
    pub chi_n: f64,
    /// Generations between eigendecompositions of `C`.
    pub eigen_interval: usize,
}

impl StrategyParams {
    pub fn new(dim: usize, lambda: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        if lambda < 2 {
            return Err(Error::Parameter(format!("lambda must be at least 2, got {lambda}")));
        }
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let eigen_interval = ((1.0 / (10.0 * n * (c_1 + c_mu))).floor() as usize).max(1);

        Ok(StrategyParams { lambda, mu, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n, eigen_interval })
    }
}

/// State of one CMA-ES instance.
#[derive(Debug, Clone)]
pub struct CmaState {
    params: StrategyParams,
    criteria: StopCriteria,
    mean: DVector<f64>,
    sigma: f64,
    sigma0: f64,
    cov: DMatrix<f64>,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    generation: u64,
    // C = B diag(d^2) B^T
    basis: DMatrix<f64>,
    axis_lengths: DVector<f64>,
    eigen_age: usize,
    best_history: VecDeque<f64>,
    history_len: usize,
    last_fitness: Vec<f64>,
    best: Option<SearchPoint>,
}

impl CmaState {
    pub fn new(mean0: &[f64], sigma0: f64, lambda: usize, domain: &Region) -> Result<Self> {
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::Parameter(format!("sigma0 must be positive and finite, got {sigma0}")));
        }
        if !domain.contains(mean0) {
            return Err(Error::DomainViolation(format!("initial mean {mean0:?}")));
        }
        let dim = mean0.len();
        let params = StrategyParams::new(dim, lambda)?;
        let history_len = stagnation_window(dim, lambda);
        Ok(CmaState {
            params,
            criteria: StopCriteria::default(),
            mean: DVector::from_column_slice(mean0),
            sigma: sigma0,
            sigma0,
            cov: DMatrix::identity(dim, dim),
            path_sigma: DVector::zeros(dim),
            path_c: DVector::zeros(dim),
            generation: 0,
            basis: DMatrix::identity(dim, dim),
            axis_lengths: DVector::from_element(dim, 1.0),
            eigen_age: 0,
            best_history: VecDeque::with_capacity(history_len),
            history_len,
            last_fitness: Vec::new(),
            best: None,
        })
    }

    pub fn with_criteria(mut self, criteria: StopCriteria) -> Self {
        self.criteria = criteria;
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn criteria(&self) -> &StopCriteria {
        &self.criteria
    }

    pub fn lambda(&self) -> usize {
        self.params.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn path_sigma(&self) -> &[f64] {
        self.path_sigma.as_slice()
    }

    pub fn path_c(&self) -> &[f64] {
        self.path_c.as_slice()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn best_history(&self) -> &VecDeque<f64> {
        &self.best_history
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    /// Best candidate passed to [`update`](Self::update) so far.
    pub fn best(&self) -> Option<&SearchPoint> {
        self.best.as_ref()
    }

    /// `max eig(C) / min eig(C)` from the current eigendecomposition.
    pub fn condition_number(&self) -> f64 {
        let max = self.axis_lengths.max();
        let min = self.axis_lengths.min();
        (max / min).powi(2)
    }

    /// Replaces the covariance matrix and refreshes its eigendecomposition.
    pub fn set_covariance(&mut self, cov: DMatrix<f64>) -> Result<()> {
        if cov.nrows() != self.dim() || cov.ncols() != self.dim() {
            return Err(Error::Input("covariance has the wrong shape".into()));
        }
        self.cov = cov;
        self.refresh_eigen()
    }

    pub fn set_sigma(&mut self, sigma: f64) -> Result<()> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be positive and finite, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(())
    }

    fn refresh_eigen(&mut self) -> Result<()> {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        if sym.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("covariance has non-finite entries".into()));
        }
        self.cov = sym;
        let eig = SymmetricEigen::new(self.cov.clone());
        let min = eig.eigenvalues.min();
        if !(min > 0.0) || eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("covariance is not positive definite (min eigenvalue {min})")));
        }
        self.axis_lengths = eig.eigenvalues.map(f64::sqrt);
        self.basis = eig.eigenvectors;
        self.eigen_age = 0;
        Ok(())
    }

    /// Draws `lambda` candidates from `N(m, sigma^2 C)` restricted to `domain`.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, domain: &Region) -> Result<Vec<Vec<f64>>> {
        if self.eigen_age >= self.params.eigen_interval {
            self.refresh_eigen()?;
        }
        let dim = self.dim();
        let mut out = Vec::with_capacity(self.params.lambda);
        for _ in 0..self.params.lambda {
            let mut x = Vec::new();
            for _ in 0..MAX_RESAMPLES {
                let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = &self.basis * z.component_mul(&self.axis_lengths);
                x = (&self.mean + y * self.sigma).data.into();
                if domain.contains(&x) {
                    break;
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("sampled a non-finite candidate".into()));
            }
            domain.clamp(&mut x);
            out.push(x);
        }
        Ok(out)
    }

    /// One generation update from `lambda` evaluated candidates sorted by
    /// ascending fitness.
    pub fn update(&mut self, ranked: &[(Vec<f64>, f64)]) -> Result<()> {
        let p = &self.params;
        if ranked.len() != p.lambda {
            return Err(Error::Input(format!("expected {} candidates, got {}", p.lambda, ranked.len())));
        }
        if ranked.iter().any(|(x, f)| !f.is_finite() || x.len() != self.mean.len()) {
            return Err(Error::Input("candidates need finite fitness and matching dimension".into()));
        }
        if ranked.windows(2).any(|w| w[0].1 > w[1].1) {
            return Err(Error::Input("candidates must be sorted by ascending fitness".into()));
        }
        let n = self.dim() as f64;

        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> = ranked[..p.mu]
            .iter()
            .map(|(x, _)| (DVector::from_column_slice(x) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.dim());
        for (w, y) in p.weights.iter().zip(&steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean = &old_mean + &y_w * self.sigma;

        // C^{-1/2} y_w = B diag(1/d) B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.tr_mul(&y_w)).component_div(&self.axis_lengths);
        self.path_sigma = &self.path_sigma * (1.0 - p.c_sigma)
            + inv_sqrt_y * (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();

        let gen = (self.generation + 1) as f64;
        let ps_norm = self.path_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - p.c_sigma).powf(2.0 * gen)).sqrt()
            < (1.4 + 2.0 / (n + 1.0)) * p.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.path_c = &self.path_c * (1.0 - p.c_c) + &y_w * (h * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt());

        let mut rank_mu = DMatrix::zeros(self.dim(), self.dim());
        for (w, y) in p.weights.iter().zip(&steps) {
            rank_mu.ger(*w, y, y, 1.0);
        }
        let rank_one = &self.path_c * self.path_c.transpose();
        let stall = (1.0 - h) * p.c_c * (2.0 - p.c_c);
        self.cov = &self.cov * (1.0 - p.c_1 - p.c_mu) + (rank_one + &self.cov * stall) * p.c_1 + rank_mu * p.c_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Numerical(format!("step size became {}", self.sigma)));
        }

        self.generation += 1;
        if self.best_history.len() == self.history_len {
            self.best_history.pop_front();
        }
        self.best_history.push_back(ranked[0].1);
        self.last_fitness = ranked.iter().map(|(_, f)| *f).collect();
        if self.best.as_ref().is_none_or(|b| ranked[0].1 < b.fitness) {
            self.best = Some(SearchPoint { coords: ranked[0].0.clone(), fitness: ranked[0].1, eval_index: 0 });
        }

        self.eigen_age += 1;
        if self.eigen_age >= self.params.eigen_interval {
            self.refresh_eigen()?;
        }
        Ok(())
    }

    /// First matching stop reason in the order BudgetExhausted, CovCondition,
    /// Stagnation, TolFun, TolX.
    pub fn check_stop(&self, evals_used: u64, budget: u64) -> Option<StopReason> {
        if evals_used >= budget {
            return Some(StopReason::BudgetExhausted);
        }
        if self.condition_number() > self.criteria.cond_limit {
            return Some(StopReason::CovCondition);
        }
        let full = self.best_history.len() == self.history_len;
        let hist_range = range(self.best_history.iter().copied());
        if full && hist_range <= self.criteria.tol_fun_hist {
            return Some(StopReason::Stagnation);
        }
        if let Some(tol) = self.criteria.tol_fun {
            let all = range(self.best_history.iter().chain(&self.last_fitness).copied());
            if full && all <= tol {
                return Some(StopReason::TolFun);
            }
        }
        if let Some(factor) = self.criteria.tol_x_factor {
            let limit = factor * self.sigma0;
            let small = (0..self.dim())
                .all(|i| self.sigma * self.path_c[i].abs().max(self.cov[(i, i)].sqrt()) < limit);
            if self.generation > 0 && small {
                return Some(StopReason::TolX);
            }
        }
        None
    }
}

fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi { f64::INFINITY } else { hi - lo }
}

/// Outcome of [`run_until_stop`].
#[derive(Debug, Clone, PartialEq)]
pub struct CmaRun {
    pub stop: StopReason,
    pub generations: u64,
    pub evaluations: u64,
}

/// Runs sample, evaluate, update until a stopping criterion fires. A
/// numerical breakdown of the covariance (non-finite or indefinite) is
/// reported as [`StopReason::CovCondition`]: the matrix is then effectively
/// infinitely ill-conditioned. Running out of budget part way through a
/// generation ends the run with [`StopReason::BudgetExhausted`].
pub fn run_until_stop<R: Rng + ?Sized>(
    state: &mut CmaState,
    evaluator: &mut BudgetedEvaluator<'_>,
    rng: &mut R,
) -> Result<CmaRun> {
    let domain = evaluator.problem().domain().clone();
    let start = evaluator.used();
    let start_gen = state.generation();
    let finish = |state: &CmaState, evaluator: &BudgetedEvaluator<'_>, stop| CmaRun {
        stop,
        generations: state.generation() - start_gen,
        evaluations: evaluator.used() - start,
    };
    loop {
        if let Some(stop) = state.check_stop(evaluator.used(), evaluator.budget()) {
            return Ok(finish(state, evaluator, stop));
        }
        let candidates = match state.sample(rng, &domain) {
            Ok(c) => c,
            Err(Error::Numerical(_)) => return Ok(finish(state, evaluator, StopReason::CovCondition)),
            Err(e) => return Err(e),
        };
        let mut ranked = Vec::with_capacity(candidates.len());
        for x in candidates {
            match evaluator.evaluate(&x) {
                Ok(f) => ranked.push((x, f)),
                Err(Error::BudgetExhausted) => {
                    return Ok(finish(state, evaluator, StopReason::BudgetExhausted))
                }
                Err(e) => return Err(e),
            }
        }
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
        match state.update(&ranked) {
            Ok(()) => {}
            Err(Error::Numerical(_)) => return Ok(finish(state, evaluator, StopReason::CovCondition)),
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::Problem;
    use crate::Category;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(dim: usize) -> Region {
        Region::cube(dim, -100.0, 100.0).unwrap()
    }

    #[test]
    fn lambda_formula() {
        assert_eq!(default_lambda(10).unwrap(), 10);
        assert_eq!(default_lambda(30).unwrap(), 14);
        assert_eq!(default_lambda(1).unwrap(), 4);
        assert_eq!(default_lambda(2).unwrap(), 6);
        assert!(default_lambda(0).is_err());
    }

    #[test]
    fn stagnation_window_matches_formula() {
        for dim in 1..=50usize {
            for lambda in 4..=40usize {
                let expect = 10 + ((30 * dim) as f64 / lambda as f64).ceil() as usize;
                assert_eq!(stagnation_window(dim, lambda), expect);
                let s = CmaState::new(&vec![0.0; dim], 1.0, lambda, &cube(dim)).unwrap();
                assert_eq!(s.history_len(), expect);
            }
        }
    }

    #[test]
    fn initial_state() {
        let s = CmaState::new(&[1.0; 10], 0.5, 10, &cube(10)).unwrap();
        assert_eq!(s.condition_number(), 1.0);
        assert!(s.path_sigma().iter().all(|v| *v == 0.0));
        assert!(s.path_c().iter().all(|v| *v == 0.0));
        let p = s.params();
        assert_eq!(p.mu, 5);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // direct evaluation of the weight formula
        let raw: Vec<f64> = (1..=5).map(|i| 5.5f64.ln() - (i as f64).ln()).collect();
        let s1: f64 = raw.iter().sum();
        let s2: f64 = raw.iter().map(|w| w * w).sum();
        let mu_eff = s1 * s1 / s2;
        assert!((p.mu_eff - mu_eff).abs() < 1e-12);
        assert!(1.0 <= p.mu_eff && p.mu_eff <= 5.0);
        assert!(p.weights.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn init_rejects_bad_inputs() {
        assert!(matches!(CmaState::new(&[0.0; 2], 0.0, 6, &cube(2)), Err(Error::Parameter(_))));
        assert!(matches!(CmaState::new(&[0.0; 2], -1.0, 6, &cube(2)), Err(Error::Parameter(_))));
        assert!(matches!(CmaState::new(&[0.0; 2], 1.0, 1, &cube(2)), Err(Error::Parameter(_))));
        assert!(matches!(CmaState::new(&[500.0; 2], 1.0, 6, &cube(2)), Err(Error::DomainViolation(_))));
    }

    #[test]
    fn tiny_sigma_samples_the_mean() {
        let mut s = CmaState::new(&[3.0, -2.0], 1e-300, 6, &cube(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for x in s.sample(&mut rng, &cube(2)).unwrap() {
            assert_eq!(x, vec![3.0, -2.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_in_domain() {
        let domain = Region::cube(3, 0.0, 1.0).unwrap();
        let mut a = CmaState::new(&[0.9; 3], 2.0, 7, &domain).unwrap();
        let mut b = a.clone();
        let xa = a.sample(&mut ChaCha8Rng::seed_from_u64(4), &domain).unwrap();
        let xb = b.sample(&mut ChaCha8Rng::seed_from_u64(4), &domain).unwrap();
        assert_eq!(xa, xb);
        assert!(xa.iter().all(|x| domain.contains(x)));
    }

    #[test]
    fn update_rejects_bad_batches() {
        let mut s = CmaState::new(&[0.0; 2], 1.0, 6, &cube(2)).unwrap();
        let mut batch: Vec<(Vec<f64>, f64)> = (0..6).map(|i| (vec![i as f64, 0.0], i as f64)).collect();
        assert!(s.update(&batch[..5]).is_err());
        batch[2].1 = f64::NAN;
        assert!(matches!(s.update(&batch), Err(Error::Input(_))));
        batch[2].1 = 100.0;
        assert!(matches!(s.update(&batch), Err(Error::Input(_))));
    }

    #[test]
    fn tied_candidates_move_mean_to_weighted_mean_of_first_mu() {
        let mut s = CmaState::new(&[0.0; 2], 1.0, 6, &cube(2)).unwrap();
        let batch: Vec<(Vec<f64>, f64)> = (0..6).map(|i| (vec![i as f64, -(i as f64)], 1.0)).collect();
        let w = s.params().weights.clone();
        s.update(&batch).unwrap();
        let expect: f64 = w.iter().enumerate().map(|(i, w)| w * i as f64).sum();
        assert!((s.mean()[0] - expect).abs() < 1e-12);
        assert!((s.mean()[1] + expect).abs() < 1e-12);
        let c = s.covariance();
        assert!((c[(0, 1)] - c[(1, 0)]).abs() < 1e-12);
    }

    #[test]
    fn stop_priorities() {
        let mut s = CmaState::new(&[0.0; 10], 1.0, 10, &cube(10)).unwrap();
        assert_eq!(s.check_stop(0, 100), None);
        assert_eq!(s.check_stop(100, 100), Some(StopReason::BudgetExhausted));
        let mut c = DMatrix::identity(10, 10);
        c[(0, 0)] = 1e15;
        s.set_covariance(c).unwrap();
        assert_eq!(s.check_stop(0, 100), Some(StopReason::CovCondition));
        assert_eq!(s.check_stop(100, 100), Some(StopReason::BudgetExhausted));
    }

    #[test]
    fn constant_objective_stagnates_at_window_end() {
        let p = Problem::custom("const", cube(10), Category::Unimodal, None, |_| 1.0);
        let mut ev = BudgetedEvaluator::new(&p, 100_000);
        let mut s = CmaState::new(&[0.0; 10], 1.0, 10, &cube(10)).unwrap();
        let run = run_until_stop(&mut s, &mut ev, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(run.stop, StopReason::Stagnation);
        assert_eq!(run.generations, 40);
        assert_eq!(run.evaluations, 400);
    }

    #[test]
    fn tolfun_fires_when_looser_than_history_tolerance() {
        let p = Problem::sphere(2).unwrap();
        let mut ev = BudgetedEvaluator::new(&p, 100_000);
        let crit = StopCriteria { tol_fun: Some(1e-6), ..StopCriteria::default() };
        let mut s = CmaState::new(&[3.0, 3.0], 1.0, 6, p.domain()).unwrap().with_criteria(crit);
        let run = run_until_stop(&mut s, &mut ev, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(run.stop, StopReason::TolFun);
    }

    #[test]
    fn tolx_fires_when_steps_collapse() {
        let p = Problem::sphere(2).unwrap();
        let mut ev = BudgetedEvaluator::new(&p, 100_000);
        let crit = StopCriteria { tol_fun: None, tol_fun_hist: -1.0, tol_x_factor: Some(1e-6), ..StopCriteria::default() };
        let mut s = CmaState::new(&[3.0, 3.0], 1.0, 6, p.domain()).unwrap().with_criteria(crit);
        let run = run_until_stop(&mut s, &mut ev, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(run.stop, StopReason::TolX);
    }

    #[test]
    fn budget_exhaustion_mid_generation() {
        let p = Problem::sphere(2).unwrap();
        let mut ev = BudgetedEvaluator::new(&p, 15);
        let mut s = CmaState::new(&[3.0, 3.0], 1.0, 6, p.domain()).unwrap();
        let run = run_until_stop(&mut s, &mut ev, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(run.stop, StopReason::BudgetExhausted);
        assert_eq!(ev.used(), 15);
        assert_eq!(s.generation(), 2);
    }
}
