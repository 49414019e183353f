//! Desk-scale benchmark problems and a budget-counting evaluator.
//!
//! The suite mixes separable, ill-conditioned, multimodal, hybrid and
//! composition functions on box domains. Shifts and rotations are drawn
//! deterministically from a seed; rotations are the Q factor of a seeded
//! Gaussian matrix.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bsp_archive::{Region, SearchPoint};
use crate::error::{Error, Result};

/// Minimizer of the unshifted Schwefel 2.26 function, per coordinate.
const SCHWEFEL_ARGMIN: f64 = 420.968_746_359_982;
const SCHWEFEL_OFFSET: f64 = 418.982_887_272_433_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Unimodal,
    Multimodal,
    Hybrid,
    Composition,
}

#[derive(Clone)]
enum Objective {
    Sphere,
    Ellipsoid { scales: Vec<f64>, transform: Transform },
    Rosenbrock { transform: Transform },
    Rastrigin { transform: Transform },
    Ackley { transform: Transform },
    Griewank { transform: Transform },
    Schwefel,
    Hybrid { shift: Vec<f64>, perm: Vec<usize>, groups: [usize; 2], scales: Vec<f64> },
    Composition { components: Vec<Component> },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

/// `z = R (x - shift)`, each part optional.
#[derive(Clone, Default)]
struct Transform {
    shift: Option<Vec<f64>>,
    rotation: Option<DMatrix<f64>>,
}

impl Transform {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = match &self.shift {
            Some(o) => x.iter().zip(o).map(|(a, b)| a - b).collect(),
            None => x.to_vec(),
        };
        match &self.rotation {
            Some(r) => (r * DVector::from_vec(shifted)).data.into(),
            None => shifted,
        }
    }
}

#[derive(Clone, Copy)]
enum Basis {
    Rastrigin,
    Ellipsoid,
    Griewank,
}

#[derive(Clone)]
struct Component {
    basis: Basis,
    transform: Transform,
    scales: Vec<f64>,
    weight: f64,
    bias: f64,
}

fn sphere(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

fn ellipsoid(z: &[f64], scales: &[f64]) -> f64 {
    z.iter().zip(scales).map(|(v, a)| (a * v) * (a * v)).sum()
}

fn rosenbrock(z: &[f64]) -> f64 {
    z.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

fn rastrigin(z: &[f64]) -> f64 {
    10.0 * z.len() as f64 + z.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
}

fn ackley(z: &[f64]) -> f64 {
    let n = z.len() as f64;
    let sq = z.iter().map(|v| v * v).sum::<f64>() / n;
    let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
    // Clamp the rounding residue at the optimum so the minimum is exactly 0.
    (-20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + std::f64::consts::E).max(0.0)
}

fn griewank(z: &[f64]) -> f64 {
    let s = z.iter().map(|v| v * v).sum::<f64>() / 4000.0;
    let p: f64 = z
        .iter()
        .enumerate()
        .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
        .product();
    s - p + 1.0
}

fn schwefel(z: &[f64]) -> f64 {
    SCHWEFEL_OFFSET * z.len() as f64 - z.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
}

fn axis_scales(dim: usize, axis_ratio: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim)
        .map(|i| axis_ratio.powf(i as f64 / (dim - 1) as f64))
        .collect()
}

/// Orthonormal matrix from the QR decomposition of a seeded Gaussian matrix,
/// with column signs fixed by the diagonal of R.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Shift drawn uniformly from the central 80% of the domain.
fn random_shift<R: Rng + ?Sized>(domain: &Region, rng: &mut R) -> Vec<f64> {
    (0..domain.dim())
        .map(|d| domain.lower()[d] + (0.1 + 0.8 * rng.random::<f64>()) * domain.side(d))
        .collect()
}

/// A box-constrained minimization problem.
#[derive(Clone)]
pub struct Problem {
    name: String,
    domain: Region,
    category: Category,
    f_opt: Option<f64>,
    optimizer: Option<Vec<f64>>,
    objective: Objective,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("category", &self.category)
            .field("f_opt", &self.f_opt)
            .finish_non_exhaustive()
    }
}

impl Problem {
    fn build(
        name: &str,
        domain: Region,
        category: Category,
        optimizer: Option<Vec<f64>>,
        objective: Objective,
    ) -> Self {
        let mut p = Problem {
            name: name.to_string(),
            domain,
            category,
            f_opt: None,
            optimizer,
            objective,
        };
        p.f_opt = p.optimizer.as_ref().map(|x| p.value(x));
        p
    }

    /// Problem backed by an arbitrary closure, e.g. a constant objective.
    pub fn custom<F>(name: &str, domain: Region, category: Category, f_opt: Option<f64>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Problem {
            name: name.to_string(),
            domain,
            category,
            f_opt,
            optimizer: None,
            objective: Objective::Custom(Arc::new(f)),
        }
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        let domain = Region::cube(dim, -100.0, 100.0)?;
        Ok(Problem::build("sphere", domain, Category::Unimodal, Some(vec![0.0; dim]), Objective::Sphere))
    }

    /// Axis-aligned, unshifted ellipsoid with condition number `axis_ratio^2`.
    pub fn ellipsoid(dim: usize, axis_ratio: f64) -> Result<Self> {
        let domain = Region::cube(dim, -100.0, 100.0)?;
        Ok(Problem::build(
            "ellipsoid",
            domain,
            Category::Unimodal,
            Some(vec![0.0; dim]),
            Objective::Ellipsoid { scales: axis_scales(dim, axis_ratio), transform: Transform::default() },
        ))
    }

    /// Unshifted Rastrigin on `[-100, 100]^dim`.
    pub fn rastrigin(dim: usize) -> Result<Self> {
        let domain = Region::cube(dim, -100.0, 100.0)?;
        Ok(Problem::build(
            "rastrigin",
            domain,
            Category::Multimodal,
            Some(vec![0.0; dim]),
            Objective::Rastrigin { transform: Transform::default() },
        ))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn f_opt(&self) -> Option<f64> {
        self.f_opt
    }

    /// Known global minimizer, when there is one.
    pub fn optimizer(&self) -> Option<&[f64]> {
        self.optimizer.as_deref()
    }

    /// Raw objective value. No budget accounting and no domain check.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Sphere => sphere(x),
            Objective::Ellipsoid { scales, transform } => ellipsoid(&transform.apply(x), scales),
            Objective::Rosenbrock { transform } => {
                // Optimum of the plain function is at 1; move it onto the shift.
                let z: Vec<f64> = transform.apply(x).into_iter().map(|v| v + 1.0).collect();
                rosenbrock(&z)
            }
            Objective::Rastrigin { transform } => rastrigin(&transform.apply(x)),
            Objective::Ackley { transform } => ackley(&transform.apply(x)),
            Objective::Griewank { transform } => griewank(&transform.apply(x)),
            Objective::Schwefel => schwefel(x),
            Objective::Hybrid { shift, perm, groups, scales } => {
                let z: Vec<f64> = perm.iter().map(|&i| x[i] - shift[i]).collect();
                let (a, b) = (groups[0], groups[0] + groups[1]);
                let tail: Vec<f64> = z[b..].iter().map(|v| v + SCHWEFEL_ARGMIN).collect();
                rastrigin(&z[..a]) + ellipsoid(&z[a..b], scales) + schwefel(&tail)
            }
            Objective::Composition { components } => components
                .iter()
                .map(|c| {
                    let z = c.transform.apply(x);
                    let g = match c.basis {
                        Basis::Rastrigin => rastrigin(&z),
                        Basis::Ellipsoid => ellipsoid(&z, &c.scales),
                        Basis::Griewank => griewank(&z),
                    };
                    c.weight * g + c.bias
                })
                .fold(f64::INFINITY, f64::min),
            Objective::Custom(f) => f(x),
        }
    }

    pub fn manifest(&self) -> ProblemManifest {
        ProblemManifest {
            name: self.name.clone(),
            dim: self.dim(),
            domain: self.domain.clone(),
            f_opt: self.f_opt,
            category: self.category,
        }
    }
}

/// Serializable description of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub name: String,
    pub dim: usize,
    pub domain: Region,
    pub f_opt: Option<f64>,
    pub category: Category,
}

/// The ten-function desk suite for `dim` in {2, 10, 30}.
pub fn make_suite(dim: usize, seed: u64) -> Result<Vec<Problem>> {
    if ![2, 10, 30].contains(&dim) {
        return Err(Error::Parameter(format!("suite dimension must be 2, 10 or 30, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = Region::cube(dim, -100.0, 100.0)?;
    let mut suite = Vec::with_capacity(10);

    suite.push(Problem::sphere(dim)?);

    let shift = random_shift(&domain, &mut rng);
    let rotation = random_rotation(dim, &mut rng);
    suite.push(Problem::build(
        "ellipsoid_rot",
        domain.clone(),
        Category::Unimodal,
        Some(shift.clone()),
        Objective::Ellipsoid {
            scales: axis_scales(dim, 1e6),
            transform: Transform { shift: Some(shift), rotation: Some(rotation) },
        },
    ));

    let shift = random_shift(&domain, &mut rng);
    suite.push(Problem::build(
        "rosenbrock",
        domain.clone(),
        Category::Multimodal,
        Some(shift.clone()),
        Objective::Rosenbrock { transform: Transform { shift: Some(shift), rotation: None } },
    ));

    suite.push(Problem::rastrigin(dim)?);

    let shift = random_shift(&domain, &mut rng);
    let rotation = random_rotation(dim, &mut rng);
    suite.push(Problem::build(
        "rastrigin_shift_rot",
        domain.clone(),
        Category::Multimodal,
        Some(shift.clone()),
        Objective::Rastrigin { transform: Transform { shift: Some(shift), rotation: Some(rotation) } },
    ));

    let shift = random_shift(&domain, &mut rng);
    suite.push(Problem::build(
        "ackley",
        domain.clone(),
        Category::Multimodal,
        Some(shift.clone()),
        Objective::Ackley { transform: Transform { shift: Some(shift), rotation: None } },
    ));

    let shift = random_shift(&domain, &mut rng);
    suite.push(Problem::build(
        "griewank",
        domain.clone(),
        Category::Multimodal,
        Some(shift.clone()),
        Objective::Griewank { transform: Transform { shift: Some(shift), rotation: None } },
    ));

    suite.push(Problem::build(
        "schwefel",
        Region::cube(dim, -500.0, 500.0)?,
        Category::Multimodal,
        Some(vec![SCHWEFEL_ARGMIN; dim]),
        Objective::Schwefel,
    ));

    // Hybrid: a seeded permutation splits the coordinates into a Rastrigin,
    // an ellipsoid and a Schwefel block.
    let shift = random_shift(&domain, &mut rng);
    let mut perm: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let g0 = (3 * dim).div_ceil(10);
    let g1 = (3 * dim).div_ceil(10).min(dim - g0);
    suite.push(Problem::build(
        "hybrid",
        domain.clone(),
        Category::Hybrid,
        Some(shift.clone()),
        Objective::Hybrid { shift, perm, groups: [g0, g1], scales: axis_scales(g1.max(1), 1e3) },
    ));

    // Composition: the lower envelope of three shifted basins with biases
    // 0, 100 and 200. The global optimum is the first basin's centre.
    let mut components = Vec::with_capacity(3);
    let specs = [(Basis::Rastrigin, 1.0, 0.0), (Basis::Ellipsoid, 1e-3, 100.0), (Basis::Griewank, 100.0, 200.0)];
    for (basis, weight, bias) in specs {
        let shift = random_shift(&domain, &mut rng);
        let rotation = random_rotation(dim, &mut rng);
        components.push(Component {
            basis,
            transform: Transform { shift: Some(shift), rotation: Some(rotation) },
            scales: axis_scales(dim, 1e3),
            weight,
            bias,
        });
    }
    let opt = components[0].transform.shift.clone();
    suite.push(Problem::build(
        "composition",
        domain,
        Category::Composition,
        opt,
        Objective::Composition { components },
    ));

    Ok(suite)
}

/// Counts objective evaluations against a fixed budget and keeps the
/// best-so-far solution and its improvement trace.
#[derive(Debug, Clone)]
pub struct BudgetedEvaluator<'a> {
    problem: &'a Problem,
    used: u64,
    budget: u64,
    best: Option<SearchPoint>,
    trace: Vec<(u64, f64)>,
    history: Option<Vec<Vec<f64>>>,
}

impl<'a> BudgetedEvaluator<'a> {
    pub fn new(problem: &'a Problem, budget: u64) -> Self {
        BudgetedEvaluator { problem, used: 0, budget, best: None, trace: Vec::new(), history: None }
    }

    /// Also keep every evaluated coordinate vector, in evaluation order.
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.used
    }

    pub fn best(&self) -> Option<&SearchPoint> {
        self.best.as_ref()
    }

    /// `(eval_index, best_so_far)` at every improvement.
    pub fn trace(&self) -> &[(u64, f64)] {
        &self.trace
    }

    pub fn history(&self) -> Option<&[Vec<f64>]> {
        self.history.as_deref()
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted);
        }
        if !self.problem.domain.contains(x) {
            return Err(Error::DomainViolation(format!("{x:?}")));
        }
        self.used += 1;
        let f = self.problem.value(x);
        if !f.is_finite() {
            return Err(Error::Numerical(format!("objective returned {f} at {x:?}")));
        }
        if let Some(h) = &mut self.history {
            h.push(x.to_vec());
        }
        if self.best.as_ref().is_none_or(|b| f < b.fitness) {
            self.best = Some(SearchPoint { coords: x.to_vec(), fitness: f, eval_index: self.used });
            self.trace.push((self.used, f));
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn by_name<'a>(suite: &'a [Problem], name: &str) -> &'a Problem {
        suite.iter().find(|p| p.name() == name).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let s = Problem::sphere(10).unwrap();
        assert_eq!(s.value(&[0.0; 10]), 0.0);
        let r = Problem::rastrigin(10).unwrap();
        assert_eq!(r.value(&[0.0; 10]), 0.0);
        let mut x = vec![0.0; 10];
        x[0] = 1.0;
        assert!((r.value(&x) - 1.0).abs() < 1e-12);
        let e = Problem::ellipsoid(3, 100.0).unwrap();
        // scales 1, 10, 100
        assert!((e.value(&[1.0, 1.0, 1.0]) - (1.0 + 100.0 + 10000.0)).abs() < 1e-9);
    }

    #[test]
    fn suite_contents_and_domains() {
        let suite = make_suite(10, 7).unwrap();
        let names: Vec<_> = suite.iter().map(|p| p.name()).collect();
        assert_eq!(
            names,
            [
                "sphere",
                "ellipsoid_rot",
                "rosenbrock",
                "rastrigin",
                "rastrigin_shift_rot",
                "ackley",
                "griewank",
                "schwefel",
                "hybrid",
                "composition"
            ]
        );
        for p in &suite {
            assert_eq!(p.dim(), 10);
            let side = if p.name() == "schwefel" { 1000.0 } else { 200.0 };
            assert_eq!(p.domain().max_side(), side);
        }
        assert!(make_suite(5, 0).is_err());
    }

    #[test]
    fn optima_are_attained_where_stated() {
        for dim in [2, 10, 30] {
            for p in make_suite(dim, 11).unwrap() {
                let x = p.optimizer().unwrap();
                assert!(p.domain().contains(x), "{} optimizer outside domain", p.name());
                let f_opt = p.f_opt().unwrap();
                assert!((p.value(x) - f_opt).abs() < 1e-9, "{}: {} vs {}", p.name(), p.value(x), f_opt);
                assert!(f_opt.abs() < 1e-9 * dim as f64, "{} f_opt {f_opt}", p.name());
            }
        }
    }

    #[test]
    fn shifted_rotated_rastrigin_is_zero_at_shift() {
        let suite = make_suite(10, 3).unwrap();
        let p = by_name(&suite, "rastrigin_shift_rot");
        let x = p.optimizer().unwrap().to_vec();
        assert!(p.value(&x).abs() < 1e-9);
        // and the shift is in the central 80% of the domain
        assert!(x.iter().all(|v| v.abs() <= 80.0));
    }

    #[test]
    fn rotations_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2, 10, 30] {
            let q = random_rotation(dim, &mut rng);
            let err = (&q.transpose() * &q - DMatrix::identity(dim, dim)).abs().max();
            assert!(err < 1e-12, "dim {dim}: {err}");
        }
    }

    #[test]
    fn suite_is_deterministic_per_seed() {
        let a = make_suite(10, 42).unwrap();
        let b = make_suite(10, 42).unwrap();
        let c = make_suite(10, 43).unwrap();
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 3.7 - 15.0).collect();
        for ((pa, pb), pc) in a.iter().zip(&b).zip(&c) {
            assert_eq!(pa.value(&x).to_bits(), pb.value(&x).to_bits());
            if pa.name() != "sphere" && pa.name() != "rastrigin" && pa.name() != "schwefel" {
                assert_ne!(pa.value(&x), pc.value(&x), "{}", pa.name());
            }
        }
    }

    #[test]
    fn multimodal_values_exceed_optimum_off_optimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in make_suite(10, 1).unwrap() {
            if p.category() == Category::Unimodal {
                continue;
            }
            let f_opt = p.f_opt().unwrap();
            for _ in 0..1000 {
                let x = p.domain().sample_uniform(&mut rng);
                assert!(p.value(&x) > f_opt, "{} at {x:?}", p.name());
            }
        }
    }

    #[test]
    fn evaluator_counts_and_exhausts() {
        let p = Problem::sphere(2).unwrap();
        let mut ev = BudgetedEvaluator::new(&p, 1);
        assert_eq!(ev.evaluate(&[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(ev.evaluate(&[1.0, 1.0]), Err(Error::BudgetExhausted));
        assert_eq!(ev.used(), 1);

        let mut a = BudgetedEvaluator::new(&p, 10);
        let mut b = BudgetedEvaluator::new(&p, 10);
        for i in 0..4 {
            a.evaluate(&[i as f64, 0.0]).unwrap();
        }
        b.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!((a.used(), b.used()), (4, 1));
        assert!(matches!(a.evaluate(&[200.0, 0.0]), Err(Error::DomainViolation(_))));
        assert_eq!(a.used(), 4);
    }

    #[test]
    fn evaluator_tracks_best_and_trace() {
        let p = Problem::sphere(1).unwrap();
        let mut ev = BudgetedEvaluator::new(&p, 10).with_history();
        for x in [3.0, 4.0, 1.0, 2.0, 0.5] {
            ev.evaluate(&[x]).unwrap();
        }
        assert_eq!(ev.trace(), &[(1, 9.0), (3, 1.0), (5, 0.25)]);
        assert_eq!(ev.best().unwrap().coords, vec![0.5]);
        assert_eq!(ev.history().unwrap().len(), 5);
    }

    #[test]
    fn manifest_serializes() {
        let p = Problem::sphere(2).unwrap();
        let json = serde_json::to_string(&p.manifest()).unwrap();
        assert!(json.contains("\"category\":\"unimodal\""));
        let back: ProblemManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p.manifest());
    }
}
