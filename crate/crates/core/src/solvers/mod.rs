//! Unconstrained inner solvers for merit functions, plus a projected-gradient
//! baseline that works on the bounded problem directly.

mod descent;
mod lbfgs;
mod line_search;
pub(crate) use line_search::roundoff;
mod projected;

pub use descent::{gradient_descent, gradient_descent_with, hybrid_descent, hybrid_descent_with, steepest_descent_sigmoidal, steepest_descent_sigmoidal_with};
pub use lbfgs::{lbfgs, lbfgs_with, nonsmooth_qn_ppm, nonsmooth_qn_ppm_with};
pub use projected::{projected_gradient_baseline, projected_gradient_baseline_with};

use serde::{Deserialize, Serialize};
use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::merit::{EvalCounts, MeritFunction, WarpKind};

/// Line-search parameters shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    /// Step shrink factor for backtracking.
    pub backtrack: f64,
    /// Wolfe curvature constant.
    pub c2: f64,
    /// Maximum trial steps per line search.
    pub max_steps: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self { c1: 1e-4, backtrack: 0.5, c2: 0.9, max_steps: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Gradient-norm tolerance.
    pub delta: f64,
    pub max_iters: usize,
    /// Stop once this many objective evaluations have been spent in the solve.
    pub max_evals: Option<u64>,
    pub line_search: LineSearchParams,
    /// L-BFGS history length.
    pub memory: usize,
    /// Constant step size for gradient descent; backtracking when absent.
    pub fixed_step: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 1e-6,
            max_iters: 10_000,
            max_evals: None,
            line_search: LineSearchParams::default(),
            memory: 10,
            fixed_step: None,
        }
    }
}

impl SolverConfig {
    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(self.delta > 0.0) {
            return bad("delta", "must be positive");
        }
        let ls = &self.line_search;
        if !(0.0 < ls.c1 && ls.c1 < ls.c2 && ls.c2 < 1.0) {
            return bad("line_search", "need 0 < c1 < c2 < 1");
        }
        if !(0.0 < ls.backtrack && ls.backtrack < 1.0) {
            return bad("backtrack", "must lie in (0, 1)");
        }
        if ls.max_steps == 0 {
            return bad("max_steps", "must be at least 1");
        }
        if self.memory == 0 {
            return bad("memory", "must be at least 1");
        }
        if let Some(a) = self.fixed_step {
            if !(a > 0.0 && a.is_finite()) {
                return bad("fixed_step", "must be positive and finite");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    GradientTolMet,
    MaxIter,
    LineSearchFailure,
    Stalled,
    Diverged,
    BudgetExhausted,
    Interrupted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_star: Vec<f64>,
    /// Feasible point represented by `x_star` (unit coordinates).
    pub image: Vec<f64>,
    pub value: f64,
    /// Gradient (or direction) at `x_star`, as last computed by the solver.
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evals: EvalCounts,
    pub final_grad_norm: f64,
    pub status: Status,
    /// Per-step `∇f(y)ᵀ diag(σ⊙y⊙(1−y))⁻¹ ∇f(y)`, sigmoidal steepest descent only.
    pub orthogonality: Vec<f64>,
}

/// What observers see after every accepted iterate (including the start).
#[derive(Debug, Clone, Copy)]
pub struct Iterate<'a> {
    pub iter: usize,
    pub x: &'a [f64],
    pub image: &'a [f64],
    pub value: f64,
    pub grad_norm: f64,
    pub evals: EvalCounts,
}

/// Anything the unconstrained solvers can minimize.
pub trait DescentTarget {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    /// Gradient, or the generalized direction used in its place.
    fn slope(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Feasible point (unit coordinates) represented by `x`.
    fn image(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn counts(&self) -> EvalCounts;
}

impl DescentTarget for MeritFunction {
    fn dim(&self) -> usize {
        MeritFunction::dim(self)
    }
    fn value(&self, x: &[f64]) -> Result<f64> {
        MeritFunction::value(self, x)
    }
    fn slope(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.kind() {
            WarpKind::ProjectionPenalty => self.ppm_direction(x),
            _ => self.gradient(x),
        }
    }
    fn image(&self, x: &[f64]) -> Result<Vec<f64>> {
        MeritFunction::image(self, x)
    }
    fn counts(&self) -> EvalCounts {
        self.objective().counts()
    }
}

pub(crate) fn no_observer(_: &Iterate<'_>) -> ControlFlow<()> {
    ControlFlow::Continue(())
}

/// Bookkeeping shared by the iterative solvers.
pub(crate) struct Run<'o> {
    pub start: EvalCounts,
    pub max_evals: Option<u64>,
    pub observer: &'o mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
}

impl<'o> Run<'o> {
    pub fn new(start: EvalCounts, cfg: &SolverConfig, observer: &'o mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>) -> Self {
        Self { start, max_evals: cfg.max_evals, observer }
    }

    pub fn over_budget(&self, now: EvalCounts) -> bool {
        self.max_evals.is_some_and(|m| now.evals - self.start.evals >= m)
    }

    pub fn notify(&mut self, it: Iterate<'_>) -> bool {
        (self.observer)(&it).is_break()
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_result<T: DescentTarget + ?Sized>(
    target: &T,
    start: EvalCounts,
    x: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
    iterations: usize,
    status: Status,
    orthogonality: Vec<f64>,
) -> Result<SolveResult> {
    Ok(SolveResult {
        image: target.image(&x)?,
        final_grad_norm: crate::linalg::norm(&gradient),
        x_star: x,
        value,
        gradient,
        iterations,
        evals: target.counts() - start,
        status,
        orthogonality,
    })
}
