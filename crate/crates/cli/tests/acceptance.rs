//! Acceptance checks, one PASS/FAIL line each. Run with
//! `cargo test -p warpopt-cli --test acceptance`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use warpopt::adawarp::{adawarp, iteration_bound, AdaWarpConfig, InnerSolver, Sigma0, UpruleMode};
use warpopt::bench::{data_profile, default_alphas, run_campaign, CampaignConfig, SolverSpec};
use warpopt::kkt::thm4_interior_bound;
use warpopt::linalg::{norm, sub};
use warpopt::merit::{global_violations, merit_lipschitz, Function, MeritFunction, Objective};
use warpopt::problems::{by_name, quadratic_problem, registry, Problem, Tag};
use warpopt::solvers::{lbfgs, SolverConfig};
use warpopt::warps::{affine_from_box, inverse_norm_bound, sigmoid_forward, sigmoid_inverse, BoundBox, SigmoidalWarp};
use warpopt_cli::{cmd_bench, merit_gradient_error, RunConfig};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Coordinates in `[lo, hi]` at least `gap` away from every integer.
fn off_kinks(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let v = rng.gen_range(lo..hi);
            if (v - v.round()).abs() > gap {
                break v;
            }
        })
        .collect()
}

fn gradient_fidelity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for p in registry() {
        let n = p.dim();
        let obj = p.objective.fork();
        let hetero: Vec<f64> = (0..n).map(|i| 0.25 + 3.75 * ((i * 7 % 11) as f64 / 10.0)).collect();
        let merits = [
            ("sigmoid-1", MeritFunction::sigmoidal(obj.clone(), SigmoidalWarp::uniform(n, 1.0).map_err(e2s)?)),
            ("sigmoid-vec", MeritFunction::sigmoidal(obj.clone(), SigmoidalWarp::new(hetero).map_err(e2s)?)),
            ("ppm", Ok(MeritFunction::projection_penalty(obj.clone()))),
            ("reflection", Ok(MeritFunction::reflection(obj.clone()))),
        ];
        for (label, m) in merits {
            let m = m.map_err(e2s)?;
            pairs += 1;
            for _ in 0..100 {
                let x = match label {
                    "ppm" => off_kinks(&mut rng, n, -0.5, 1.5, 0.01),
                    "reflection" => off_kinks(&mut rng, n, -2.0, 3.0, 0.01),
                    _ => (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect(),
                };
                let e = merit_gradient_error(&m, &x, 1e-3).map_err(|e| format!("{} {label}: {e}", p.name))?;
                ensure(e < 1e-6, || format!("{} {label}: relative error {e:.3e}", p.name))?;
                worst = worst.max(e);
            }
        }
    }
    Ok(format!("{pairs} pairs, max relative error {worst:.2e}"))
}

fn lipschitz_secants() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let quads: Vec<Problem> = registry().into_iter().filter(|p| p.has_tag(Tag::Quadratic) && p.dim() <= 50).collect();
    let mut worst = 0.0f64;
    for smax in [0.5, 1.0, 4.0] {
        for k in 0..1000 {
            let p = &quads[k % quads.len()];
            let n = p.dim();
            let mut sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1 * smax..smax)).collect();
            sigma[k % n] = smax;
            let w = SigmoidalWarp::new(sigma).map_err(e2s)?;
            let bound = merit_lipschitz(&p.objective, &w).map_err(e2s)?;
            let m = MeritFunction::sigmoidal(p.objective.fork(), w).map_err(e2s)?;
            let scale = [1e-4, 1e-2, 1.0, 5.0][k % 4];
            let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let x2: Vec<f64> = x1.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
            let dg = sub(&m.gradient(&x1).map_err(e2s)?, &m.gradient(&x2).map_err(e2s)?);
            let slope = norm(&dg) / norm(&sub(&x1, &x2));
            ensure(slope <= bound * (1.0 + 1e-12), || format!("{}: slope {slope} > bound {bound} (σ_max {smax})", p.name))?;
            worst = worst.max(slope / bound);
        }
    }
    Ok(format!("3000 secants, max slope/bound {worst:.3}"))
}

fn inverse_norm() -> Result<String, String> {
    let b3 = inverse_norm_bound(1e-3).map_err(e2s)?;
    ensure(b3 > 6.90 && b3 < 6.91, || format!("bound(1e-3) = {b3}"))?;
    let b16 = inverse_norm_bound(1e-16).map_err(e2s)?;
    ensure(b16 < 37.0, || format!("bound(1e-16) = {b16}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let unit = SigmoidalWarp::uniform(1, 1.0).map_err(e2s)?;
    for _ in 0..10_000 {
        let a: f64 = 10f64.powf(rng.gen_range(-15.0..-0.31));
        let y = if rng.gen_bool(0.5) { rng.gen_range(a..=0.5) } else { rng.gen_range(0.5..=1.0 - a) };
        let x = sigmoid_inverse(&[y], &unit).map_err(e2s)?[0];
        let bound = inverse_norm_bound(a).map_err(e2s)?;
        ensure(x.abs() <= bound * (1.0 + 1e-12), || format!("a = {a}, y = {y}: |x| = {} > {bound}", x.abs()))?;
    }
    Ok(format!("bound(1e-3) = {b3:.4}, bound(1e-16) = {b16:.2}, 10^4 draws"))
}

fn interior_bijection() -> Result<String, String> {
    let cfg = SolverConfig::default().with_delta(1e-10).with_max_iters(100_000);
    let mut worst = 0.0f64;
    let mut count = 0;
    for p in registry() {
        let Some(opt) = &p.known_optimum else { continue };
        if !opt.active.is_empty() {
            continue;
        }
        count += 1;
        let w = SigmoidalWarp::uniform(p.dim(), 1.0).map_err(e2s)?;
        let m = MeritFunction::sigmoidal(p.objective.fork(), w.clone()).map_err(e2s)?;
        let x0 = sigmoid_inverse(&p.unit_start().map_err(e2s)?, &w).map_err(e2s)?;
        let r = lbfgs(&m, &x0, &cfg).map_err(e2s)?;
        let y = sigmoid_forward(&r.x_star, &w).map_err(e2s)?.into_inner();
        let y_star = affine_from_box(&opt.point, p.bounds()).map_err(e2s)?;
        let d = norm(&sub(&y, &y_star));
        ensure(d < 1e-6, || format!("{}: ‖S(x*) − y*‖ = {d:.3e} ({:?})", p.name, r.status))?;
        worst = worst.max(d);
    }
    ensure(count > 0, || "no interior problems".into())?;
    Ok(format!("{count} problems, max distance {worst:.2e}"))
}

fn limiting_stationarity() -> Result<String, String> {
    let mut last = Vec::new();
    for name in ["skewed_corner_quadratic_2", "corner_quadratic_5"] {
        let p = by_name(name).map_err(e2s)?;
        let opt = p.known_optimum.as_ref().ok_or("no optimum")?;
        let y_star = affine_from_box(&opt.point, p.bounds()).map_err(e2s)?;
        let y0 = p.unit_start().map_err(e2s)?;
        let w = SigmoidalWarp::uniform(p.dim(), 1.0).map_err(e2s)?;
        let m = MeritFunction::sigmoidal(p.objective.fork(), w.clone()).map_err(e2s)?;
        let mut prev = f64::INFINITY;
        for k in 1..=40 {
            let t = 0.5f64.powi(k);
            let y: Vec<f64> = y_star.iter().zip(&y0).map(|(s, a)| s + t * (a - s)).collect();
            let g = norm(&m.gradient(&sigmoid_inverse(&y, &w).map_err(e2s)?).map_err(e2s)?);
            ensure(g < prev, || format!("{name}: norm rose at k = {k}: {g} ≥ {prev}"))?;
            prev = g;
        }
        ensure(prev < 1e-8, || format!("{name}: final norm {prev}"))?;
        last.push(format!("{name} {prev:.1e}"));
    }
    Ok(format!("final norms: {}", last.join(", ")))
}

/// `f(y) = gᵀy` on the unit cube.
struct Linear(Vec<f64>);

impl Function for Linear {
    fn dim(&self) -> usize {
        self.0.len()
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.0.iter().zip(y).map(|(a, b)| a * b).sum()
    }
    fn gradient(&self, _y: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

fn interior_error_bound() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g = rng.gen_range(-50.0..50.0);
        let sigma = 10f64.powf(rng.gen_range(-2.0..2.0));
        let y = rng.gen_range(1e-3..1.0 - 1e-3);
        let obj = Objective::new(Arc::new(Linear(vec![g])), BoundBox::unit(1)).map_err(e2s)?;
        let w = SigmoidalWarp::uniform(1, sigma).map_err(e2s)?;
        let m = MeritFunction::sigmoidal(obj, w.clone()).map_err(e2s)?;
        let x = sigmoid_inverse(&[y], &w).map_err(e2s)?;
        let yy = sigmoid_forward(&x, &w).map_err(e2s)?.into_inner()[0];
        // any δ at or above the measured merit partial satisfies the premise
        let delta = m.gradient(&x).map_err(e2s)?[0].abs() * (1.0 + rng.gen_range(0.0..1.0));
        let bound = thm4_interior_bound(delta, sigma, yy).map_err(e2s)?;
        ensure(g.abs() <= bound * (1.0 + 1e-9), || format!("|g| = {} > {bound}", g.abs()))?;
        worst = worst.max(g.abs() / bound);
    }
    let c = thm4_interior_bound(1.0, 1.0, 0.1).map_err(e2s)?;
    ensure((c - 11.12).abs() < 0.02 && c <= 12.0, || format!("worked constant {c}"))?;
    Ok(format!("1000 premises (max |g|/bound {worst:.3}), worked constant {c:.2}δ"))
}

fn outer_iteration_bound() -> Result<String, String> {
    let eps = 1e-6;
    let k = iteration_bound(eps, eps, 1.0, Some(1e-8), None, None).map_err(e2s)?;
    ensure(k == 54, || format!("iteration_bound = {k}"))?;
    let mut notes = Vec::new();
    // interior minimizers off the centre, so ν lies strictly inside (0, ½)
    let cases = [
        ("q3", vec![4.0, 10.0, 1.0], vec![0.3, 0.8, 0.6]),
        ("q5", vec![1.0, 2.0, 50.0, 8.0, 3.0], vec![0.05, 0.45, 0.9, 0.7, 0.25]),
    ];
    for (name, h, c) in cases {
        let n = h.len();
        let p = quadratic_problem(name, h, c.clone(), BoundBox::unit(n), vec![0.5; n]).map_err(e2s)?;
        let nu = c.iter().map(|v| v.min(1.0 - v)).fold(0.5, f64::min);
        let bound = iteration_bound(eps, eps, 1.0, Some(nu), None, None).map_err(e2s)?;
        let cfg = AdaWarpConfig {
            sigma0: Sigma0::Scalar(1.0),
            epsilon: eps,
            delta: eps,
            inner: InnerSolver::GradientDescent { constant_step: true },
            uprule_mode: UpruleMode::Full,
            solver: SolverConfig::default().with_max_iters(1_000_000),
            ..Default::default()
        };
        let t = adawarp(&p.objective.fork(), &p.unit_start().map_err(e2s)?, &cfg).map_err(e2s)?;
        ensure(t.converged(), || format!("{name}: {:?} {:?}", t.termination, t.error))?;
        ensure(t.records.len() as u64 <= bound, || format!("{name}: {} outer iterations > bound {bound}", t.records.len()))?;
        notes.push(format!("{name} {}≤{bound}", t.records.len()));
    }
    ensure(!notes.is_empty(), || "no interior quadratic".into())?;
    Ok(format!("bound(ν=1e-8) = 54; {}", notes.join(", ")))
}

fn skewed_corner_paths() -> Result<String, String> {
    let p = by_name("skewed_corner_quadratic_2").map_err(e2s)?;
    let mut evals = Vec::new();
    for s0 in [1e-3, 1.0, 100.0] {
        let cfg = AdaWarpConfig { sigma0: Sigma0::Scalar(s0), ..Default::default() };
        let obj = p.objective.fork();
        let t = adawarp(&obj, &p.unit_start().map_err(e2s)?, &cfg).map_err(e2s)?;
        let last = t.last().ok_or("empty trace")?;
        ensure(t.converged() && last.merit_grad_norm < 1e-6, || format!("σ₀ = {s0}: {:?}", t.termination))?;
        ensure(t.solution.iter().all(|v| (v - 1.0).abs() < 1e-3), || format!("σ₀ = {s0}: {:?}", t.solution))?;
        evals.push(t.total_evals.evals);
    }
    ensure(evals[2] < evals[0], || format!("evals {evals:?}"))?;
    Ok(format!("evals for σ₀ = 0.001, 1, 100: {evals:?}"))
}

fn campaign() -> Result<String, String> {
    let problems = registry();
    ensure(problems.len() >= 12, || format!("{} problems", problems.len()))?;
    let solvers = SolverSpec::defaults();
    let cfg = CampaignConfig::default();
    let records = run_campaign(&problems, &solvers, &cfg).map_err(e2s)?;
    let solved = |s: &SolverSpec, tau: f64| {
        records.iter().filter(|r| r.solver == s.to_string() && r.tau == tau && r.t_pa.is_some()).count()
    };
    let all = problems.len();
    for s in [SolverSpec::AdaWarp, SolverSpec::ProjgradBaseline] {
        let k = solved(&s, 1e-2);
        ensure(k == all, || format!("{s} solved {k}/{all} at τ = 1e-2"))?;
    }
    let ada = solved(&SolverSpec::AdaWarp, 1e-4);
    for s in solvers.iter().filter(|s| matches!(s, SolverSpec::FixedSigma(_))) {
        let k = solved(s, 1e-4);
        ensure(ada >= k, || format!("adawarp {ada} < {s} {k} at τ = 1e-4"))?;
    }
    let profile = data_profile(&records, &default_alphas()).map_err(e2s)?;
    for c in &profile.curves {
        ensure(c.fractions.iter().all(|f| (0.0..=1.0).contains(f)), || format!("{} out of range", c.solver))?;
        ensure(c.fractions.windows(2).all(|w| w[0] <= w[1]), || format!("{} not monotone", c.solver))?;
    }
    Ok(format!("{all} problems; adawarp solves {ada}/{all} at τ = 1e-4"))
}

fn deterministic_bench() -> Result<String, String> {
    let a = tempfile::tempdir().map_err(e2s)?;
    let b = tempfile::tempdir().map_err(e2s)?;
    let cfg = RunConfig::default();
    let x = cmd_bench(&cfg, a.path()).map_err(e2s)?;
    let y = cmd_bench(&RunConfig { jobs: Some(1), ..cfg }, b.path()).map_err(e2s)?;
    let fx = std::fs::read(&x.csv_path).map_err(e2s)?;
    let fy = std::fs::read(&y.csv_path).map_err(e2s)?;
    ensure(fx == fy, || "CSV differs between runs".into())?;
    Ok(format!("{} bytes identical", fx.len()))
}

fn no_violations() -> Result<String, String> {
    let v = global_violations();
    ensure(v == 0, || format!("{v} infeasible evaluations"))?;
    Ok("0 infeasible evaluations in this process".into())
}

fn main() -> ExitCode {
    let checks: [(u32, &str, Check, u64); 11] = [
        (1, "gradient fidelity", gradient_fidelity, 10),
        (2, "merit Lipschitz bound", lipschitz_secants, 5),
        (3, "inverse norm bound", inverse_norm, 2),
        (4, "interior bijection", interior_bijection, 30),
        (5, "limiting stationarity", limiting_stationarity, 2),
        (6, "interior error bound", interior_error_bound, 5),
        (7, "outer iteration bound", outer_iteration_bound, 60),
        (8, "two-dimensional quadratic paths", skewed_corner_paths, 60),
        (9, "registry campaign", campaign, 600),
        (11, "deterministic bench", deterministic_bench, 600),
        // last, so it sees every evaluation above
        (10, "unrelaxability audit", no_violations, 1),
    ];
    let mut failed = 0;
    for (id, name, check, limit) in checks {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|msg| {
            if took <= Duration::from_secs(limit) {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {took:.2?}, limit {limit} s"))
            }
        });
        match result {
            Ok(msg) => println!("PASS criterion {id:>2} {name}: {msg} [{took:.2?}]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {msg} [{took:.2?}]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
