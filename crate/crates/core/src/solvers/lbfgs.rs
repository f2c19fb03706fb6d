//! Limited-memory BFGS with a strong-Wolfe line search, and its nonsmooth
//! variant for the projected penalty merit.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use super::line_search::{roundoff, strong_wolfe, weak_wolfe, Outcome};
use super::{build_result, no_observer, DescentTarget, Iterate, Run, SolveResult, SolverConfig, Status};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, dot, norm, sub};
use crate::merit::{MeritFunction, WarpKind};

/// Curvature pairs with `sᵀy ≤ CURVATURE_SKIP ‖s‖‖y‖` are dropped.
const CURVATURE_SKIP: f64 = 1e-10;

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        Self { pairs: VecDeque::with_capacity(cap), cap }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > CURVATURE_SKIP * norm(&s) * norm(&y)) {
            return false;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// Two-loop recursion: returns `−H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Search {
    StrongWolfe,
    WeakWolfe,
}

pub fn lbfgs<T: DescentTarget + ?Sized>(target: &T, x0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    lbfgs_with(target, x0, cfg, &mut no_observer)
}

pub fn lbfgs_with<T: DescentTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    quasi_newton(target, x0, cfg, Search::StrongWolfe, observer)
}

/// Quasi-Newton on the projected penalty merit, driven by `ppm_direction`.
/// `image` of the result (and of every observed iterate) is the projected point.
pub fn nonsmooth_qn_ppm(m: &MeritFunction, x0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    nonsmooth_qn_ppm_with(m, x0, cfg, &mut no_observer)
}

pub fn nonsmooth_qn_ppm_with(
    m: &MeritFunction,
    x0: &[f64],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    if *m.kind() != WarpKind::ProjectionPenalty {
        return Err(Error::NotProjectionPenalty);
    }
    quasi_newton(m, x0, cfg, Search::WeakWolfe, observer)
}

fn quasi_newton<T: DescentTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    cfg: &SolverConfig,
    search: Search,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    cfg.validate()?;
    check_dim(target.dim(), x0.len())?;
    let mut run = Run::new(target.counts(), cfg, observer);
    let start = run.start;

    let mut x = x0.to_vec();
    let mut f = target.value(&x)?;
    let mut g = target.slope(&x)?;
    // best point by merit value; the nonsmooth search may wander uphill in g-norm
    let mut best = (x.clone(), f, g.clone());

    let finish = |best: (Vec<f64>, f64, Vec<f64>), iters: usize, status: Status| {
        build_result(target, start, best.0, best.1, best.2, iters, status, Vec::new())
    };

    if !f.is_finite() || !all_finite(&g) {
        return finish(best, 0, Status::Diverged);
    }
    let image = target.image(&x)?;
    if run.notify(Iterate { iter: 0, x: &x, image: &image, value: f, grad_norm: norm(&g), evals: target.counts() }) {
        return finish(best, 0, Status::Interrupted);
    }

    let mut history = History::new(cfg.memory);
    let mut restarted = false;
    let mut k = 0;
    loop {
        if norm(&g) <= cfg.delta {
            return finish((x, f, g), k, Status::GradientTolMet);
        }
        if k >= cfg.max_iters {
            return finish(best, k, Status::MaxIter);
        }
        if run.over_budget(target.counts()) {
            return finish(best, k, Status::BudgetExhausted);
        }

        let mut d = history.direction(&g);
        if !(dot(&d, &g) < 0.0) || !all_finite(&d) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if history.is_empty() { 1.0 / norm(&d).max(f64::MIN_POSITIVE) } else { 1.0 };
        let outcome = match search {
            Search::StrongWolfe => strong_wolfe(target, &x, f, &g, &d, alpha0, &cfg.line_search)?,
            Search::WeakWolfe => weak_wolfe(target, &x, f, &g, &d, alpha0, &cfg.line_search)?,
        };
        let probe = match outcome {
            Outcome::Accepted(p) => p,
            Outcome::Failed if !history.is_empty() => {
                // stale curvature; retry from steepest descent next round
                history.clear();
                k += 1;
                continue;
            }
            Outcome::Failed => return finish(best, k, Status::LineSearchFailure),
        };

        let s = sub(&probe.x, &x);
        let yv = sub(&probe.g, &g);
        let flat = (f - probe.f).abs() <= 1e-16 * f.abs().max(1e-300);
        let stalled = norm(&s) <= 1e-15 * (1.0 + norm(&x)) || (flat && norm(&probe.g) >= norm(&g));
        history.push(s, yv);
        x = probe.x;
        f = probe.f;
        g = probe.g;
        k += 1;
        // within roundoff of the best value, the smaller gradient wins
        let tied = (f - best.1).abs() <= roundoff(best.1);
        if (f < best.1 && !tied) || (tied && norm(&g) <= norm(&best.2)) {
            best = (x.clone(), f, g.clone());
        }
        let image = target.image(&x)?;
        if run.notify(Iterate { iter: k, x: &x, image: &image, value: f, grad_norm: norm(&g), evals: target.counts() }) {
            return finish(best, k, Status::Interrupted);
        }
        if stalled && norm(&g) > cfg.delta {
            if restarted {
                return finish(best, k, Status::Stalled);
            }
            // curvature gathered across a kink can freeze the iteration; retry from −g
            history.clear();
            restarted = true;
        } else {
            restarted = false;
        }
    }
}
