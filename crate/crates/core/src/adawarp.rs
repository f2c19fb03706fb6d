//! Adaptive warping: repeated inner solves of the sigmoidal merit with a
//! growing σ, until the warped-back iterate is ε-stationary.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kkt::{epsilon_stationarity, relative_kkt_satisfied, KktReport};
use crate::linalg::norm;
use crate::merit::{merit_lipschitz, EvalCounts, MeritFunction, Objective, BND_TOL};
use crate::solvers::{self, roundoff, Iterate, SolveResult, SolverConfig, Status};
use crate::warps::{
    affine_to_box, check_interior, logistic, sigmoid_forward, sigmoid_inverse, sigmoid_jacobian_diag, SigmoidalWarp, FEAS_EPS, SIGMA_CAP,
};

/// Initial σ: broadcast scalar, explicit vector, or `(S(x₀) ⊙ (1 − S(x₀)))⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma0 {
    Scalar(f64),
    Vector(Vec<f64>),
    Named(Sigma0Rule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma0Rule {
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InnerSolver {
    /// Gradient descent; `constant_step` uses `α = 1/L̃` from the declared Lipschitz data.
    GradientDescent { constant_step: bool },
    Lbfgs,
    SteepestSigmoidal,
    Hybrid { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpruleMode {
    /// κ-guarded update keeping `min σ / max σ ≥ κ`.
    Full,
    /// `σ ← γ σ / √η`.
    Simplified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaWarpConfig {
    pub sigma0: Sigma0,
    pub gamma: f64,
    pub kappa: f64,
    /// Inner gradient tolerance.
    pub delta: f64,
    /// Outer ε-stationarity target.
    pub epsilon: f64,
    /// Optional relative KKT target, `ε ≤ τ ‖∇f(y₀)‖`.
    pub tau: Option<f64>,
    pub max_outer_iters: usize,
    pub inner: InnerSolver,
    pub solver: SolverConfig,
    pub uprule_mode: UpruleMode,
    /// Objective-evaluation budget over the whole run.
    pub max_evals: Option<u64>,
}

impl Default for AdaWarpConfig {
    fn default() -> Self {
        Self {
            sigma0: Sigma0::Scalar(1.0),
            gamma: 1.0,
            kappa: 0.1,
            delta: 1e-6,
            epsilon: 1e-6,
            tau: None,
            max_outer_iters: 50,
            inner: InnerSolver::Lbfgs,
            solver: SolverConfig::default(),
            uprule_mode: UpruleMode::Simplified,
            max_evals: None,
        }
    }
}

impl AdaWarpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return bad("gamma", format!("must be at least 1, got {}", self.gamma));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa", format!("must lie in (0, 1], got {}", self.kappa));
        }
        if !(self.delta > 0.0) {
            return bad("delta", format!("must be positive, got {}", self.delta));
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", format!("must be positive, got {}", self.epsilon));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0) {
                return bad("tau", format!("must be positive, got {t}"));
            }
        }
        match &self.sigma0 {
            Sigma0::Scalar(s) if !(*s > 0.0 && *s <= SIGMA_CAP) => {
                return bad("sigma0", format!("must lie in (0, {SIGMA_CAP:e}], got {s}"));
            }
            Sigma0::Vector(v) if v.iter().any(|s| !(*s > 0.0 && *s <= SIGMA_CAP)) => {
                return bad("sigma0", format!("entries must lie in (0, {SIGMA_CAP:e}]"));
            }
            _ => {}
        }
        if let InnerSolver::Hybrid { threshold } = self.inner {
            if !(-1.0..=1.0).contains(&threshold) {
                return bad("threshold", format!("must lie in [-1, 1], got {threshold}"));
            }
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    EpsilonStationary,
    RelativeKkt,
    MaxOuterIters,
    BudgetExhausted,
    InnerFailure,
    Interrupted,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub sigma: Vec<f64>,
    pub x_star: Vec<f64>,
    /// Unit-cube image `S(x*)`.
    pub y_star: Vec<f64>,
    /// `f̃_σ` at the warm start, i.e. `f(y_k)`.
    pub f_start: f64,
    pub f: f64,
    pub inner_iterations: usize,
    pub inner_evals: EvalCounts,
    pub inner_status: Status,
    /// The inner result increased the merit and was replaced by the warm start.
    pub fallback: bool,
    pub merit_grad_norm: f64,
    pub kkt: KktReport,
    pub eta: Vec<f64>,
    pub evals_so_far: EvalCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaWarpTrace {
    pub records: Vec<OuterRecord>,
    pub total_evals: EvalCounts,
    pub termination: Termination,
    /// Final point in the objective's own coordinates.
    pub solution: Vec<f64>,
    pub grad0_norm: f64,
    /// Set when the run ended on an inner-solver error.
    pub error: Option<String>,
}

impl AdaWarpTrace {
    pub fn last(&self) -> Option<&OuterRecord> {
        self.records.last()
    }

    pub fn final_epsilon(&self) -> Option<f64> {
        self.last().map(|r| r.kkt.epsilon)
    }

    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::EpsilonStationary | Termination::RelativeKkt)
    }
}

/// `η_i = min(y_i, 1 − y_i)`
pub fn boundary_distances(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v.min(1.0 - v)).collect()
}

/// The σ update. Outputs saturate at [`SIGMA_CAP`].
pub fn uprule(sigma: &[f64], eta: &[f64], gamma: f64, kappa: f64, mode: UpruleMode) -> Result<Vec<f64>> {
    crate::error::check_dim(sigma.len(), eta.len())?;
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter { name: "sigma", reason: "entries must be positive".into() });
    }
    if eta.iter().any(|e| !(*e > 0.0 && *e <= 0.5)) {
        return Err(Error::InvalidParameter { name: "eta", reason: "entries must lie in (0, 1/2]".into() });
    }
    if !(gamma >= 1.0) {
        return Err(Error::InvalidParameter { name: "gamma", reason: format!("must be at least 1, got {gamma}") });
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidParameter { name: "kappa", reason: format!("must lie in (0, 1], got {kappa}") });
    }
    let raw: Vec<f64> = sigma.iter().zip(eta).map(|(s, e)| gamma * s / e.sqrt()).collect();
    let out = match mode {
        UpruleMode::Simplified => raw,
        UpruleMode::Full => {
            let ceiling = raw.iter().cloned().fold(f64::INFINITY, f64::min) / kappa;
            raw.into_iter().map(|r| if r <= ceiling { r } else { ceiling }).collect()
        }
    };
    Ok(out.into_iter().map(|s| s.min(SIGMA_CAP)).collect())
}

/// `σ₀ = (S(x) ⊙ (1 − S(x)))⁻¹` with `S` taken at σ = 1.
pub fn sigma0_heuristic(x: &[f64]) -> Result<Vec<f64>> {
    if !crate::linalg::all_finite(x) {
        return Err(Error::InvalidParameter { name: "x", reason: "entries must be finite".into() });
    }
    // y(1 − y) as s(x)·s(−x): exact symmetry, no cancellation near 1
    let clamp = |v: f64| v.clamp(FEAS_EPS, 1.0 - FEAS_EPS);
    Ok(x.iter().map(|&v| (1.0 / (clamp(logistic(v)) * clamp(logistic(-v)))).min(SIGMA_CAP)).collect())
}

/// Upper bound on the outer iterations needed for ε-stationarity.
///
/// `nu` bounds the distance of interior limit components from the boundary and
/// `xi` (with `l_bar`) covers components converging to a bound. Whichever
/// cases are supplied enter the maximum.
pub fn iteration_bound(
    epsilon: f64,
    delta: f64,
    gamma: f64,
    nu: Option<f64>,
    xi: Option<f64>,
    l_bar: Option<f64>,
) -> Result<u64> {
    let positive = |name, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidParameter { name, reason: format!("must be positive, got {v}") })
        }
    };
    positive("epsilon", epsilon)?;
    positive("delta", delta)?;
    if !(gamma >= 1.0) {
        return Err(Error::InvalidParameter { name: "gamma", reason: format!("must be at least 1, got {gamma}") });
    }
    let rate = (std::f64::consts::SQRT_2 * gamma).ln();
    let mut terms = Vec::new();
    if let Some(nu) = nu {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(Error::InvalidParameter { name: "nu", reason: format!("must lie in (0, 1/2), got {nu}") });
        }
        terms.push((delta / (epsilon * nu * (1.0 - nu))).ln() / rate);
    }
    if let Some(xi) = xi {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidParameter { name: "xi", reason: format!("must lie in (0, 1), got {xi}") });
        }
        let l_bar = positive("l_bar", l_bar.ok_or(Error::MissingBoundCase)?)?;
        terms.push((l_bar * delta / (xi * epsilon * epsilon)).ln() / rate);
    }
    if terms.is_empty() {
        return Err(Error::MissingBoundCase);
    }
    let t = terms.into_iter().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    // ln(1) computed as 1e-17 must not become one iteration
    let nearest = t.round();
    let n = if (t - nearest).abs() <= 1e-9 { nearest } else { t.ceil() };
    Ok(n as u64)
}

fn initial_sigma(cfg: &AdaWarpConfig, y0: &[f64]) -> Result<Vec<f64>> {
    let n = y0.len();
    let sigma = match &cfg.sigma0 {
        Sigma0::Scalar(s) => vec![*s; n],
        Sigma0::Vector(v) => {
            crate::error::check_dim(n, v.len())?;
            v.clone()
        }
        Sigma0::Named(Sigma0Rule::Heuristic) => {
            let x = sigmoid_inverse(y0, &SigmoidalWarp::uniform(n, 1.0)?)?;
            sigma0_heuristic(&x)?
        }
    };
    if cfg.uprule_mode == UpruleMode::Full {
        let lo = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sigma.iter().cloned().fold(0.0, f64::max);
        if lo < cfg.kappa * hi {
            return Err(Error::InvalidParameter {
                name: "sigma0",
                reason: format!("min/max ratio {} is below kappa = {}", lo / hi, cfg.kappa),
            });
        }
    }
    Ok(sigma)
}

fn inner_solve(
    m: &MeritFunction,
    x0: &[f64],
    cfg: &AdaWarpConfig,
    solver_cfg: &SolverConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<SolveResult> {
    match cfg.inner {
        InnerSolver::GradientDescent { .. } => solvers::gradient_descent_with(m, x0, solver_cfg, observer),
        InnerSolver::Lbfgs => solvers::lbfgs_with(m, x0, solver_cfg, observer),
        InnerSolver::SteepestSigmoidal => solvers::steepest_descent_sigmoidal_with(m, x0, solver_cfg, observer),
        InnerSolver::Hybrid { threshold } => solvers::hybrid_descent_with(m, x0, solver_cfg, threshold, observer),
    }
}

/// `σ x` beyond which the forward map is clamped.
const SATURATED: f64 = 40.0;

/// `S⁻¹(y)`, except that coordinates within [`BND_TOL`] of a face whose
/// gradient pushes further out start saturated. Those are on the face to
/// machine precision, and chasing them only feeds roundoff to the inner solver.
fn warm_start(y: &[f64], w: &SigmoidalWarp, grad: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut x = sigmoid_inverse(y, w)?;
    if let Some(g) = grad {
        for (j, xj) in x.iter_mut().enumerate() {
            let s = w.sigma()[j];
            if y[j] <= BND_TOL && g[j] > 0.0 {
                *xj = -SATURATED / s;
            } else if 1.0 - y[j] <= BND_TOL && g[j] < 0.0 {
                *xj = SATURATED / s;
            }
        }
    }
    Ok(x)
}

pub fn adawarp(objective: &Objective, y0: &[f64], cfg: &AdaWarpConfig) -> Result<AdaWarpTrace> {
    adawarp_with(objective, y0, cfg, &mut solvers::no_observer)
}

/// Runs the outer loop from the interior unit-cube point `y0`. The observer sees
/// every inner iterate; its `image` is the corresponding unit-cube point.
///
/// Inner line-search failures and stalls are recorded and the loop continues
/// from the best point found; a diverged or erroring inner solve ends the run
/// with the partial trace.
pub fn adawarp_with(
    objective: &Objective,
    y0: &[f64],
    cfg: &AdaWarpConfig,
    observer: &mut dyn FnMut(&Iterate<'_>) -> ControlFlow<()>,
) -> Result<AdaWarpTrace> {
    cfg.validate()?;
    crate::error::check_dim(objective.dim(), y0.len())?;
    check_interior(y0)?;
    let mut sigma = initial_sigma(cfg, y0)?;
    if matches!(cfg.inner, InnerSolver::GradientDescent { constant_step: true }) && objective.lipschitz().is_none() {
        return Err(Error::MissingLipschitz);
    }

    let start = objective.counts();
    let grad0 = objective.unit_gradient(y0)?;
    let grad0_norm = norm(&grad0);
    let mut trace = AdaWarpTrace {
        records: Vec::new(),
        total_evals: EvalCounts::default(),
        termination: Termination::MaxOuterIters,
        solution: affine_to_box(y0, objective.bounds())?,
        grad0_norm,
        error: None,
    };
    let mut y = y0.to_vec();
    let mut last_grad: Option<Vec<f64>> = None;

    let finish = |mut trace: AdaWarpTrace, termination: Termination, y: &[f64]| -> Result<AdaWarpTrace> {
        trace.termination = termination;
        trace.total_evals = objective.counts() - start;
        trace.solution = affine_to_box(y, objective.bounds())?;
        Ok(trace)
    };

    for k in 0..cfg.max_outer_iters {
        let used = objective.counts() - start;
        if cfg.max_evals.is_some_and(|m| used.evals >= m) {
            return finish(trace, Termination::BudgetExhausted, &y);
        }
        let w = SigmoidalWarp::saturating(sigma.clone())?;
        let m = MeritFunction::sigmoidal(objective.clone(), w.clone())?;
        let x_k = warm_start(&y, &w, last_grad.as_deref())?;

        let mut solver_cfg = cfg.solver.clone().with_delta(cfg.delta);
        if let InnerSolver::GradientDescent { constant_step: true } = cfg.inner {
            solver_cfg.fixed_step = Some(1.0 / merit_lipschitz(objective, &w)?);
        }
        solver_cfg.max_evals = cfg.max_evals.map(|m| m - used.evals);

        let mut f_start = None;
        let mut interrupted = false;
        let mut forward = |it: &Iterate<'_>| {
            if it.iter == 0 {
                f_start = Some(it.value);
            }
            let flow = observer(it);
            interrupted |= flow.is_break();
            flow
        };
        let before = objective.counts();
        let result = match inner_solve(&m, &x_k, cfg, &solver_cfg, &mut forward) {
            Ok(r) => r,
            Err(e) => {
                trace.error = Some(e.to_string());
                return finish(trace, Termination::InnerFailure, &y);
            }
        };
        if result.status == Status::Diverged {
            trace.error = Some("inner solver diverged".into());
            return finish(trace, Termination::InnerFailure, &y);
        }
        let f_start = match f_start {
            Some(v) => v,
            None => m.value(&x_k)?,
        };

        let (x_star, f, merit_grad, fallback) = if result.value <= f_start + roundoff(f_start) {
            (result.x_star, result.value, result.gradient, false)
        } else {
            (x_k.clone(), f_start, m.gradient(&x_k)?, true)
        };
        let y_star = sigmoid_forward(&x_star, &w)?.into_inner();
        // ∇f̃ = J ∇f, so the unit-cube gradient usually comes for free
        let j = sigmoid_jacobian_diag(&x_star, &w)?;
        let grad: Vec<f64> = if j.iter().all(|v| *v > 0.0) {
            merit_grad.iter().zip(&j).map(|(g, j)| g / j).collect()
        } else {
            objective.unit_gradient(&y_star)?
        };
        let kkt = epsilon_stationarity(&y_star, &grad)?;

        let eta = boundary_distances(&y_star);

        let epsilon_met = kkt.epsilon <= cfg.epsilon;
        let tau_met = match cfg.tau {
            Some(t) if grad0_norm > 0.0 => relative_kkt_satisfied(&kkt, &grad0, t)?,
            Some(_) => true,
            None => false,
        };
        trace.records.push(OuterRecord {
            k,
            sigma: sigma.clone(),
            x_star,
            y_star: y_star.clone(),
            f_start,
            f,
            inner_iterations: result.iterations,
            inner_evals: objective.counts() - before,
            inner_status: result.status,
            fallback,
            merit_grad_norm: norm(&merit_grad),
            kkt,
            eta: eta.clone(),
            evals_so_far: objective.counts() - start,
        });
        y = y_star;
        last_grad = Some(grad);

        if epsilon_met {
            return finish(trace, Termination::EpsilonStationary, &y);
        }
        if tau_met {
            return finish(trace, Termination::RelativeKkt, &y);
        }
        if interrupted {
            return finish(trace, Termination::Interrupted, &y);
        }
        sigma = uprule(&sigma, &eta, cfg.gamma, cfg.kappa, cfg.uprule_mode)?;
    }
    finish(trace, Termination::MaxOuterIters, &y)
}
