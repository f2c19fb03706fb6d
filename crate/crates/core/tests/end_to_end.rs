use warpopt::adawarp::{adawarp, AdaWarpConfig, Sigma0, Termination, UpruleMode};
use warpopt::kkt::epsilon_stationarity;
use warpopt::merit::MeritFunction;
use warpopt::problems::registry;
use warpopt::solvers::{nonsmooth_qn_ppm, projected_gradient_baseline, SolverConfig};
use warpopt::warps::affine_from_box;

fn solve_registry(cfg: &AdaWarpConfig) {
    for p in registry() {
        let obj = p.objective.fork();
        let t = adawarp(&obj, &p.unit_start().unwrap(), cfg).unwrap();
        assert!(t.converged(), "{}: {:?}", p.name, t.termination);
        assert_eq!(obj.violations(), 0, "{}", p.name);
        assert!(p.bounds().contains(&t.solution), "{}", p.name);
        if let Some(opt) = &p.known_optimum {
            let f = obj.value(&t.solution).unwrap();
            assert!(f - opt.value <= 1e-4 * opt.value.abs().max(1.0), "{}: {} vs {}", p.name, f, opt.value);
        }
    }
}

#[test]
fn adawarp_solves_every_registry_problem() {
    solve_registry(&AdaWarpConfig { epsilon: 1e-6, ..Default::default() });
}

#[test]
fn guarded_update_solves_every_registry_problem_from_small_sigma() {
    solve_registry(&AdaWarpConfig {
        sigma0: Sigma0::Scalar(1e-3),
        epsilon: 1e-6,
        uprule_mode: UpruleMode::Full,
        ..Default::default()
    });
}

#[test]
fn baselines_reach_the_same_kkt_points() {
    // first-order baseline: slow on the Rosenbrock valleys
    let cfg = SolverConfig::default().with_delta(1e-10).with_max_iters(200_000);
    for p in registry().into_iter().filter(|p| p.dim() <= 20) {
        let y0 = p.unit_start().unwrap();
        let a = projected_gradient_baseline(&p.objective.fork(), &y0, &cfg).unwrap();
        let m = MeritFunction::projection_penalty(p.objective.fork());
        let b = nonsmooth_qn_ppm(&m, &y0, &cfg).unwrap();
        for r in [&a, &b] {
            let g = p.objective.fork().unit_gradient(&r.image).unwrap();
            let eps = epsilon_stationarity(&r.image, &g).unwrap().epsilon;
            assert!(eps < 1e-5, "{}: ε = {eps}", p.name);
        }
        if let Some(opt) = &p.known_optimum {
            let y_star = affine_from_box(&opt.point, p.bounds()).unwrap();
            let d = a.image.iter().zip(&y_star).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(d < 1e-4, "{}: {d}", p.name);
        }
    }
}

#[test]
fn outer_limit_is_reported() {
    let p = registry().into_iter().find(|p| p.name == "skewed_corner_quadratic_2").unwrap();
    let cfg = AdaWarpConfig { epsilon: 1e-300, max_outer_iters: 2, ..Default::default() };
    let t = adawarp(&p.objective.fork(), &p.unit_start().unwrap(), &cfg).unwrap();
    assert_eq!(t.termination, Termination::MaxOuterIters);
    assert_eq!(t.records.len(), 2);
    assert!(!t.converged());
}
