//! Projected-gradient baseline working directly on the bounded problem.

use std::ops::ControlFlow;

use super::{no_observer, Iterate, Run, SolveResult, SolverConfig, Status};
use crate::error::{check_dim, Result};
use crate::kkt::projected_gradient_norm;
use crate::linalg::{dot, norm, sub};
use crate::merit::Objective;
use crate::warps::{project_box, BoundBox};

/// `y_{k+1} = π(y_k − α_k ∇f(y_k))` with backtracking along the projection arc.
/// Works in unit coordinates; `y0` must be feasible there.
pub fn projected_gradient_baseline(objective: &Objective, y0: &[f64], cfg: &SolverConfig) -> Result<SolveResult> {
    projected_gradient_baseline_with(objective, y0, cfg, &mut no_observer)
}

pub fn projected_gradient_baseline_with(
    objective: &Objective,
    y0: &[f64],
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    cfg.validate()?;
    check_dim(objective.dim(), y0.len())?;
    let unit = BoundBox::unit(objective.dim());
    let start = objective.counts();
    let mut run = Run::new(start, cfg, observer);

    let mut y = y0.to_vec();
    let mut f = objective.unit_value(&y)?;
    let mut g = objective.unit_gradient(&y)?;
    let mut pg = projected_gradient_norm(&y, &g, &unit)?;

    let finish = |y: Vec<f64>, f: f64, g: Vec<f64>, pg: f64, iters: usize, status: Status| SolveResult {
        image: y.clone(),
        x_star: y,
        value: f,
        gradient: g,
        iterations: iters,
        evals: objective.counts() - start,
        final_grad_norm: pg,
        status,
        orthogonality: Vec::new(),
    };

    if run.notify(Iterate { iter: 0, x: &y, image: &y, value: f, grad_norm: pg, evals: objective.counts() }) {
        return Ok(finish(y, f, g, pg, 0, Status::Interrupted));
    }

    let ls = cfg.line_search;
    let mut last_alpha: Option<f64> = None;
    let mut k = 0;
    loop {
        if !f.is_finite() || !g.iter().all(|v| v.is_finite()) {
            return Ok(finish(y, f, g, pg, k, Status::Diverged));
        }
        if pg <= cfg.delta {
            return Ok(finish(y, f, g, pg, k, Status::GradientTolMet));
        }
        if k >= cfg.max_iters {
            return Ok(finish(y, f, g, pg, k, Status::MaxIter));
        }
        if run.over_budget(objective.counts()) {
            return Ok(finish(y, f, g, pg, k, Status::BudgetExhausted));
        }

        let mut alpha = last_alpha.map_or(1.0 / norm(&g).max(f64::MIN_POSITIVE), |a| 2.0 * a);
        let mut accepted = None;
        for _ in 0..ls.max_steps {
            let trial: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
            let (yt, _) = project_box(&trial, &unit)?;
            let ft = objective.unit_value(&yt)?;
            if ft <= f + ls.c1 * dot(&g, &sub(&yt, &y)) {
                accepted = Some((yt, ft));
                break;
            }
            alpha *= ls.backtrack;
        }
        let Some((yn, fn_)) = accepted else {
            return Ok(finish(y, f, g, pg, k, Status::LineSearchFailure));
        };
        last_alpha = Some(alpha);
        let moved = norm(&sub(&yn, &y));
        y = yn;
        f = fn_;
        g = objective.unit_gradient(&y)?;
        pg = projected_gradient_norm(&y, &g, &unit)?;
        k += 1;
        if run.notify(Iterate { iter: k, x: &y, image: &y, value: f, grad_norm: pg, evals: objective.counts() }) {
            return Ok(finish(y, f, g, pg, k, Status::Interrupted));
        }
        if moved == 0.0 && pg > cfg.delta {
            return Ok(finish(y, f, g, pg, k, Status::Stalled));
        }
    }
}
