//! First-order descent on the merit: plain gradient steps, steepest descent in
//! the sigmoidal norm, and the hybrid of the two.

use std::ops::ControlFlow;

use super::line_search::{backtracking, Outcome};
use super::{build_result, no_observer, DescentTarget, Iterate, Run, SolveResult, SolverConfig, Status};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm};
use crate::merit::MeritFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Gradient,
    Sigmoidal,
}

/// Per-direction step memory: the next trial step starts at twice the last accepted one.
#[derive(Default)]
struct StepMemory {
    last: Option<f64>,
}

impl StepMemory {
    fn initial(&self, dnorm: f64) -> f64 {
        match self.last {
            Some(a) => 2.0 * a,
            None => 1.0 / dnorm.max(f64::MIN_POSITIVE),
        }
    }
}

/// `x_{m+1} = x_m − α ∇f̃(x_m)`, with `α = cfg.fixed_step` or Armijo backtracking.
pub fn gradient_descent<T: DescentTarget + ?Sized>(target: &T, x0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    gradient_descent_with(target, x0, cfg, &mut no_observer)
}

pub fn gradient_descent_with<T: DescentTarget + ?Sized>(
    target: &T,
    x0: &[f64],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    descend(target, None, x0, cfg, &mut |_, _| Ok(Direction::Gradient), observer)
}

/// Steepest descent in the sigmoidal norm:
/// `x_{k+1} = x_k − α diag(σ⊙y⊙(1−y))⁻¹ ∇f(y_k)`, with Armijo backtracking on `f̃`.
pub fn steepest_descent_sigmoidal(m: &MeritFunction, x0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    steepest_descent_sigmoidal_with(m, x0, cfg, &mut no_observer)
}

pub fn steepest_descent_sigmoidal_with(
    m: &MeritFunction,
    x0: &[f64],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    m.warp()?;
    descend(m, Some(m), x0, cfg, &mut |_, _| Ok(Direction::Sigmoidal), observer)
}

/// Sigmoidal steepest descent, falling back to a gradient step whenever the cosine
/// between the steepest-descent direction and `−∇f̃` is at most `switch_threshold`.
pub fn hybrid_descent(m: &MeritFunction, x0: &[f64], cfg: &SolverConfig, switch_threshold: f64) -> Result<SolveResult> {
    hybrid_descent_with(m, x0, cfg, switch_threshold, &mut no_observer)
}

pub fn hybrid_descent_with(
    m: &MeritFunction,
    x0: &[f64],
    cfg: &SolverConfig,
    switch_threshold: f64,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    m.warp()?;
    let mut choose = |x: &[f64], g: &[f64]| -> Result<Direction> {
        let j = m.jacobian_diag(x)?;
        let d: Vec<f64> = g.iter().zip(&j).map(|(gi, ji)| inv_sq_scaled(*gi, *ji)).collect();
        let cos = dot(g, &d) / (norm(g) * norm(&d));
        Ok(if cos <= switch_threshold { Direction::Gradient } else { Direction::Sigmoidal })
    };
    descend(m, Some(m), x0, cfg, &mut choose, observer)
}

/// Picks the step kind from `(x, ∇f̃(x))`.
type Chooser<'a> = dyn FnMut(&[f64], &[f64]) -> Result<Direction> + 'a;

/// `g / j²`, with clamped coordinates (`j = 0`) left still.
fn inv_sq_scaled(g: f64, j: f64) -> f64 {
    if j == 0.0 {
        0.0
    } else {
        g / (j * j)
    }
}

fn descend<T: DescentTarget + ?Sized>(
    target: &T,
    sigmoidal: Option<&MeritFunction>,
    x0: &[f64],
    cfg: &SolverConfig,
    choose: &mut Chooser<'_>,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    cfg.validate()?;
    crate::error::check_dim(target.dim(), x0.len())?;
    let mut run = Run::new(target.counts(), cfg, observer);

    let mut x = x0.to_vec();
    let mut f = target.value(&x)?;
    let mut g = target.slope(&x)?;
    let mut orthogonality = Vec::new();
    let mut memory = [StepMemory::default(), StepMemory::default()];

    let start = run.start;
    let finish = |x: Vec<f64>, f: f64, g: Vec<f64>, iters: usize, status: Status, orth: Vec<f64>| {
        build_result(target, start, x, f, g, iters, status, orth)
    };

    if !f.is_finite() || !all_finite(&g) {
        return finish(x, f, g, 0, Status::Diverged, orthogonality);
    }
    let image = target.image(&x)?;
    if run.notify(Iterate { iter: 0, x: &x, image: &image, value: f, grad_norm: norm(&g), evals: target.counts() }) {
        return finish(x, f, g, 0, Status::Interrupted, orthogonality);
    }

    let mut k = 0;
    loop {
        if norm(&g) <= cfg.delta {
            return finish(x, f, g, k, Status::GradientTolMet, orthogonality);
        }
        if k >= cfg.max_iters {
            return finish(x, f, g, k, Status::MaxIter, orthogonality);
        }
        if run.over_budget(target.counts()) {
            return finish(x, f, g, k, Status::BudgetExhausted, orthogonality);
        }

        let kind = choose(&x, &g)?;
        let d: Vec<f64> = match kind {
            Direction::Gradient => g.iter().map(|v| -v).collect(),
            Direction::Sigmoidal => {
                let m = sigmoidal.ok_or(Error::NotSigmoidal)?;
                let j = m.jacobian_diag(&x)?;
                // ∇f(y) = ∇f̃ / J, and the step is −J⁻¹ ∇f(y) = −∇f̃ / J²
                orthogonality.push(g.iter().zip(&j).map(|(gi, ji)| gi * inv_sq_scaled(*gi, *ji) / ji.max(f64::MIN_POSITIVE)).sum());
                g.iter().zip(&j).map(|(gi, ji)| -inv_sq_scaled(*gi, *ji)).collect()
            }
        };
        let slot = kind as usize;

        let (xn, fn_, gn) = match (kind, cfg.fixed_step) {
            (Direction::Gradient, Some(alpha)) => {
                let xn = axpy(&x, alpha, &d);
                if !all_finite(&xn) {
                    return finish(x, f, g, k, Status::Diverged, orthogonality);
                }
                let fn_ = target.value(&xn)?;
                let gn = target.slope(&xn)?;
                if !fn_.is_finite() || !all_finite(&gn) {
                    return finish(x, f, g, k, Status::Diverged, orthogonality);
                }
                (xn, fn_, gn)
            }
            _ => {
                let alpha0 = memory[slot].initial(norm(&d));
                match backtracking(target, &x, f, &g, &d, alpha0, &cfg.line_search)? {
                    Outcome::Accepted(p) => {
                        memory[slot].last = Some(p.alpha);
                        (p.x, p.f, p.g)
                    }
                    Outcome::Failed => return finish(x, f, g, k, Status::LineSearchFailure, orthogonality),
                }
            }
        };

        let moved = norm(&crate::linalg::sub(&xn, &x));
        let stalled = moved <= 1e-15 * (1.0 + norm(&x));
        x = xn;
        f = fn_;
        g = gn;
        k += 1;
        let image = target.image(&x)?;
        if run.notify(Iterate { iter: k, x: &x, image: &image, value: f, grad_norm: norm(&g), evals: target.counts() }) {
            return finish(x, f, g, k, Status::Interrupted, orthogonality);
        }
        if stalled && norm(&g) > cfg.delta {
            return finish(x, f, g, k, Status::Stalled, orthogonality);
        }
    }
}
