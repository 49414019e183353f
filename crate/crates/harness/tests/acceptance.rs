//! Acceptance criteria. Each criterion prints one `PASS`/`FAIL` line with
//! the measured values; the process fails if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use histarch_core::cmaes::run_until_stop;
use histarch_core::hr_restart::run_cnrga;
use histarch_core::{
    default_lambda, derive_depth_params, hr_run_with, Algorithm, BspArchive, BudgetedEvaluator, Category, CmaState,
    GaConfig, HrConfig, PhaseKind, Problem, Region, StopCriteria, StopReason, Termination,
};
use histarch_harness::experiment::run_experiment;
use histarch_harness::{kruskal_wallis, ExperimentConfig, Mark};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(limit_secs: u64, start: Instant, v: Verdict) -> Verdict {
    let took = start.elapsed();
    let ok = took <= Duration::from_secs(limit_secs);
    verdict(v.pass && ok, format!("{}; {:.2?} (limit {limit_secs} s)", v.detail, took))
}

fn parameter_formulas() -> Verdict {
    let start = Instant::now();
    let got = (
        default_lambda(10).unwrap(),
        default_lambda(30).unwrap(),
        derive_depth_params(100_000, 10),
        derive_depth_params(300_000, 14),
    );
    let pass = got == (10, 14, (17, 4), (19, 4)) && start.elapsed() < Duration::from_millis(1);
    verdict(pass, format!("lambda(10,30)=({},{}), depths={:?},{:?}; {:.2?}", got.0, got.1, got.2, got.3, start.elapsed()))
}

fn non_revisiting() -> Verdict {
    let start = Instant::now();
    let mut dups = 0;
    let mut checked = 0;
    for dim in [2, 10] {
        let problem = Problem::rastrigin(dim).unwrap();
        for seed in 0..10 {
            let mut ev = BudgetedEvaluator::new(&problem, 2000).with_history();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_cnrga(&mut ev, &GaConfig::default(), &mut rng).unwrap();
            let pts = ev.history().unwrap();
            checked += pts.len();
            for i in 0..pts.len() {
                dups += (0..i).filter(|&j| pts[i] == pts[j]).count();
            }
        }
    }
    within(10, start, verdict(dups == 0 && checked == 40_000, format!("{dups} duplicates among {checked} points")))
}

fn bsp_oracles() -> Verdict {
    let start = Instant::now();
    let domain = Region::cube(5, 0.0, 10.0).unwrap();
    let mut archive = BspArchive::new(domain.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..5000 {
        archive.insert(&domain.sample_uniform(&mut rng), i + 1).unwrap();
    }
    let leaves = archive.leaves();
    let cells: Vec<_> = leaves.iter().map(|&l| (l, archive.region_of(l).unwrap())).collect();
    let outside = cells.iter().filter(|(l, r)| !r.contains(&archive.point(*l).unwrap().coords)).count();
    let vol: f64 = cells.iter().map(|(_, r)| r.volume()).sum();
    let rel = (vol - domain.volume()).abs() / domain.volume();

    let member = |r: &Region, x: &[f64]| {
        (0..x.len()).all(|d| {
            let (lo, hi) = (r.lower()[d], r.upper()[d]);
            x[d] >= lo && (x[d] < hi || (x[d] == hi && hi == domain.upper()[d]))
        })
    };
    let mut disagree = 0;
    for _ in 0..1000 {
        let q = domain.sample_uniform(&mut rng);
        let brute: Vec<_> = cells.iter().filter(|(_, r)| member(r, &q)).map(|(l, _)| *l).collect();
        if brute.len() != 1 || archive.locate(&q).unwrap() != Some(brute[0]) {
            disagree += 1;
        }
    }
    let pass = leaves.len() == 5000 && outside == 0 && rel <= 1e-9 && disagree == 0;
    within(5, start, verdict(pass, format!("{} leaves, {outside} points outside cell, volume rel err {rel:.1e}, {disagree}/1000 probe mismatches", leaves.len())))
}

fn cmaes_sphere() -> Verdict {
    let start = Instant::now();
    let problem = Problem::sphere(10).unwrap();
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..30 {
        let mut ev = BudgetedEvaluator::new(&problem, 10_000);
        let mut state = CmaState::new(&[3.0; 10], 0.5, 10, problem.domain()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        run_until_stop(&mut state, &mut ev, &mut rng).unwrap();
        let f = ev.best().unwrap().fitness;
        worst = worst.max(f);
        if f < 1e-10 {
            hits += 1;
        }
    }
    within(30, start, verdict(hits >= 28, format!("{hits}/30 runs below 1e-10 (worst {worst:.2e})")))
}

fn stagnation_stop() -> Verdict {
    let start = Instant::now();
    let problem = Problem::custom("constant", Region::cube(10, -100.0, 100.0).unwrap(), Category::Unimodal, Some(1.0), |_| 1.0);
    let mut ev = BudgetedEvaluator::new(&problem, 1_000_000);
    let mut state = CmaState::new(&[0.0; 10], 1.0, 10, problem.domain()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let run = run_until_stop(&mut state, &mut ev, &mut rng).unwrap();
    let pass = run.stop == StopReason::Stagnation && state.generation() <= 41;
    within(1, start, verdict(pass, format!("{:?} at generation {}", run.stop, state.generation())))
}

fn covariance_condition_stop() -> Verdict {
    let start = Instant::now();
    let problem = Problem::ellipsoid(10, 1e8).unwrap();
    let criteria = StopCriteria { tol_fun: None, tol_x_factor: None, ..StopCriteria::default() };
    let mut ev = BudgetedEvaluator::new(&problem, 50_000);
    let mut state = CmaState::new(&[3.0; 10], 0.5, 10, problem.domain()).unwrap().with_criteria(criteria);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let run = run_until_stop(&mut state, &mut ev, &mut rng).unwrap();
    let pass = run.stop == StopReason::CovCondition && run.evaluations <= 50_000;
    within(
        60,
        start,
        verdict(pass, format!("{:?} after {} evaluations, cond(C)={:.2e}", run.stop, run.evaluations, state.condition_number())),
    )
}

fn on_cell(r: &Region, x: &[f64], domain: &Region) -> bool {
    (0..x.len()).all(|d| {
        let (lo, hi) = (r.lower()[d], r.upper()[d]);
        x[d] >= lo && (x[d] < hi || (x[d] == hi && hi == domain.upper()[d]))
    })
}

fn hr_trace_properties() -> Verdict {
    let start = Instant::now();
    let problem = Problem::rastrigin(10).unwrap();
    let budget = 20_000;
    let config = HrConfig::new(10, budget).unwrap();
    let mut min_exploits = usize::MAX;
    let mut problems = Vec::new();
    for seed in 0..10 {
        let mut ev = BudgetedEvaluator::new(&problem, budget).with_history();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = hr_run_with(&mut ev, &config, &mut rng).unwrap().record;
        let history = ev.history().unwrap();
        let exploits: Vec<&Region> = rec.exploit_phases().map(|p| p.roi.as_ref().unwrap()).collect();
        min_exploits = min_exploits.min(exploits.len());
        if exploits.is_empty() {
            problems.push(format!("seed {seed}: no exploit phase"));
        }
        for i in 0..exploits.len() {
            if exploits[..i].contains(&exploits[i]) {
                problems.push(format!("seed {seed}: region blocked twice"));
            }
        }
        let mut blocked: Vec<&Region> = Vec::new();
        let mut intruders = 0;
        for ph in &rec.phases {
            match ph.kind {
                PhaseKind::Exploit => blocked.push(ph.roi.as_ref().unwrap()),
                PhaseKind::Explore => {
                    for i in ph.start..=ph.end {
                        let x = &history[(i - 1) as usize];
                        if blocked.iter().any(|b| on_cell(b, x, problem.domain())) {
                            intruders += 1;
                        }
                    }
                }
            }
        }
        if intruders > 0 {
            problems.push(format!("seed {seed}: {intruders} explore points in blocked regions"));
        }
        let covered: u64 = rec.phases.iter().map(|p| p.end - p.start + 1).sum();
        let exact = rec.termination == Termination::BudgetExhausted && rec.evals_used == budget;
        if covered != rec.evals_used || history.len() as u64 != rec.evals_used || !exact {
            problems.push(format!("seed {seed}: used {} of {budget}, phases cover {covered}", rec.evals_used));
        }
    }
    let detail = if problems.is_empty() {
        format!("10 runs, min exploit phases {min_exploits}")
    } else {
        problems.join("; ")
    };
    within(60, start, verdict(problems.is_empty(), detail))
}

fn qualitative_comparison() -> Verdict {
    let start = Instant::now();
    let config = ExperimentConfig {
        algorithms: vec![Algorithm::Hr, Algorithm::Cmaes],
        dim: 10,
        problems: ["sphere", "ellipsoid_rot", "rastrigin", "griewank", "schwefel", "hybrid"].map(String::from).to_vec(),
        budget: 20_000,
        runs: 30,
        ..Default::default()
    };
    let res = run_experiment(&config).unwrap();
    let t = &res.table;
    let med = |p: &str, a| t.row(p, a).unwrap().summary.unwrap().median;
    let mut notes = Vec::new();

    let mut parity = true;
    for p in ["sphere", "ellipsoid_rot"] {
        let (h, c) = (med(p, Algorithm::Hr), med(p, Algorithm::Cmaes));
        let ok = (h == 0.0 && c == 0.0) || (h <= 10.0 * c && c <= 10.0 * h);
        parity &= ok;
        notes.push(format!("{p} hr={h:.2e} cmaes={c:.2e}"));
    }

    let multimodal = ["rastrigin", "griewank", "schwefel", "hybrid"];
    let mut not_worse = 0;
    let (mut hr_better, mut hr_worse) = (0, 0);
    for p in multimodal {
        let (h, c) = (med(p, Algorithm::Hr), med(p, Algorithm::Cmaes));
        if h <= c {
            not_worse += 1;
        }
        // Marks are for the comparator against the reference (HR).
        let mark = t.row(p, Algorithm::Cmaes).unwrap().mark.unwrap();
        match mark {
            Mark::Better => hr_worse += 1,
            Mark::Worse => hr_better += 1,
            Mark::Same => {}
        }
        notes.push(format!("{p} hr={h:.2e} cmaes={c:.2e} [{mark}]"));
    }
    let pass = parity && not_worse >= 2 && hr_worse <= hr_better;
    notes.push(format!("parity={parity}, hr median <= cmaes on {not_worse}/4, hr better/worse {hr_better}/{hr_worse}"));
    within(900, start, verdict(pass, notes.join(", ")))
}

fn statistics_oracle() -> Verdict {
    let start = Instant::now();
    let (h, p) = kruskal_wallis(&[&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0]]).unwrap();
    let textbook = (h - 6.818182).abs() <= 1e-5 && p < 0.01;

    // Tie-aware oracle: (N-1) * between-group / total variance of mid-ranks.
    let oracle = |groups: &[Vec<f64>]| {
        let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
        let ranks: Vec<f64> = pooled
            .iter()
            .map(|&x| {
                pooled.iter().filter(|&&y| y < x).count() as f64
                    + (pooled.iter().filter(|&&y| y == x).count() as f64 + 1.0) / 2.0
            })
            .collect();
        let n = ranks.len() as f64;
        let g = ranks.iter().sum::<f64>() / n;
        let total: f64 = ranks.iter().map(|r| (r - g).powi(2)).sum();
        let mut off = 0;
        let mut between = 0.0;
        for grp in groups {
            let m = ranks[off..off + grp.len()].iter().sum::<f64>() / grp.len() as f64;
            between += grp.len() as f64 * (m - g).powi(2);
            off += grp.len();
        }
        if total == 0.0 { 0.0 } else { (n - 1.0) * between / total }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut max_err = 0.0f64;
    for _ in 0..100 {
        use rand::Rng;
        let k = rng.random_range(2..=4);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..rng.random_range(2..=10)).map(|_| rng.random_range(0..5) as f64).collect())
            .collect();
        let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
        let (h, _) = kruskal_wallis(&refs).unwrap();
        max_err = max_err.max((h - oracle(&groups)).abs());
    }
    within(5, start, verdict(textbook && max_err <= 1e-9, format!("H={h:.7}, p={p:.5}, max |H - oracle| over 100 tied cases {max_err:.1e}")))
}

fn cli_determinism() -> Verdict {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_histarch"))
            .args(["run", "--suite", "2d", "--algos", "hr,cmaes,cnrga_lru", "--budget", "2000", "--runs", "3"])
            .args(["--seed", "11", "--workers", workers, "--out"])
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    let mut same = true;
    for f in ["summary.csv", "ranks.csv"] {
        let fa = std::fs::read(a.join(f)).unwrap();
        same &= fa == std::fs::read(b.join(f)).unwrap() && fa == std::fs::read(c.join(f)).unwrap();
    }
    within(120, start, verdict(same, format!("summary.csv and ranks.csv identical across workers 1, 1, 4: {same}")))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("parameter formulas", parameter_formulas),
        ("non-revisiting cNrGA", non_revisiting),
        ("BSP oracles", bsp_oracles),
        ("CMA-ES sphere convergence", cmaes_sphere),
        ("stagnation stop", stagnation_stop),
        ("covariance-condition stop", covariance_condition_stop),
        ("HR trace properties", hr_trace_properties),
        ("HR vs restarting CMA-ES", qualitative_comparison),
        ("statistics oracle", statistics_oracle),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.pass {
            failed += 1;
        }
        println!("acceptance {:>2} {} {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
