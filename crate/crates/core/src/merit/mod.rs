//! Merit functions `f̃ = f ∘ A ∘ Φ` that can be queried anywhere in `ℝⁿ`
//! while the underlying objective is only ever evaluated inside its box.

mod objective;

pub use objective::{global_violations, EvalCounts, Function, Lipschitz, Objective};

use crate::error::{check_dim, Error, Result};
use crate::warps::{
    project_box, reflect, reflect_derivative, sigmoid_forward, sigmoid_jacobian_diag,
    sigmoid_second_deriv_diag, BoundBox, SigmoidalWarp,
};

/// Absolute tolerance (unit coordinates) separating interior, boundary and
/// exterior points for the projected penalty merit.
pub const BND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum WarpKind {
    Sigmoidal(SigmoidalWarp),
    /// Projected penalty merit `f(π(x)) + d(x)`.
    ProjectionPenalty,
    Reflection,
}

/// Where a point sits relative to the unit cube, up to [`BND_TOL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
    Exterior,
}

pub fn classify(x: &[f64]) -> Region {
    let outside = x.iter().any(|&v| !(-BND_TOL..=1.0 + BND_TOL).contains(&v));
    if outside {
        return Region::Exterior;
    }
    let touching = x.iter().any(|&v| v.abs() <= BND_TOL || (v - 1.0).abs() <= BND_TOL);
    if touching {
        Region::Boundary
    } else {
        Region::Interior
    }
}

#[derive(Debug, Clone)]
pub struct MeritFunction {
    objective: Objective,
    kind: WarpKind,
    unit: BoundBox,
}

impl MeritFunction {
    pub fn new(objective: Objective, kind: WarpKind) -> Result<Self> {
        if let WarpKind::Sigmoidal(w) = &kind {
            check_dim(objective.dim(), w.dim())?;
        }
        let unit = BoundBox::unit(objective.dim());
        Ok(Self { objective, kind, unit })
    }

    pub fn sigmoidal(objective: Objective, warp: SigmoidalWarp) -> Result<Self> {
        Self::new(objective, WarpKind::Sigmoidal(warp))
    }

    pub fn projection_penalty(objective: Objective) -> Self {
        let unit = BoundBox::unit(objective.dim());
        Self { objective, kind: WarpKind::ProjectionPenalty, unit }
    }

    pub fn reflection(objective: Objective) -> Self {
        let unit = BoundBox::unit(objective.dim());
        Self { objective, kind: WarpKind::Reflection, unit }
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn kind(&self) -> &WarpKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn warp(&self) -> Result<&SigmoidalWarp> {
        match &self.kind {
            WarpKind::Sigmoidal(w) => Ok(w),
            _ => Err(Error::NotSigmoidal),
        }
    }

    /// The feasible point (unit coordinates) that `x` stands for.
    pub fn image(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(match &self.kind {
            WarpKind::Sigmoidal(w) => sigmoid_forward(x, w)?.into_inner(),
            WarpKind::ProjectionPenalty => project_box(x, &self.unit)?.0,
            WarpKind::Reflection => reflect(x),
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        match &self.kind {
            WarpKind::ProjectionPenalty => {
                let (p, d) = project_box(x, &self.unit)?;
                Ok(self.objective.unit_value(&p)? + d)
            }
            _ => self.objective.unit_value(&self.image(x)?),
        }
    }

    /// Gradient of the merit. For the projected penalty merit this is only
    /// defined off the boundary set; see [`MeritFunction::ppm_direction`].
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        match &self.kind {
            WarpKind::Sigmoidal(w) => {
                let y = sigmoid_forward(x, w)?;
                let g = self.objective.unit_gradient(&y)?;
                let j = sigmoid_jacobian_diag(x, w)?;
                Ok(j.iter().zip(&g).map(|(a, b)| a * b).collect())
            }
            WarpKind::Reflection => {
                let g = self.objective.unit_gradient(&reflect(x))?;
                Ok(reflect_derivative(x).iter().zip(&g).map(|(a, b)| a * b).collect())
            }
            WarpKind::ProjectionPenalty => {
                let near_face = x.iter().any(|&v| v.abs() <= BND_TOL || (v - 1.0).abs() <= BND_TOL);
                if near_face {
                    return Err(Error::NonsmoothPoint);
                }
                self.ppm_direction(x)
            }
        }
    }

    /// Hessian of the sigmoidal merit, `H_σ diag(∇f) + J_σ D²f J_σ` (unit coordinates).
    pub fn hessian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let w = self.warp()?;
        check_dim(self.dim(), x.len())?;
        let y = sigmoid_forward(x, w)?;
        let yb = crate::warps::affine_to_box(&y, self.objective.bounds())?;
        let widths = self.objective.bounds().widths();
        let hf = self.objective.hessian(&yb)?;
        let g = self.objective.unit_gradient(&y)?;
        let j = sigmoid_jacobian_diag(x, w)?;
        let h = sigmoid_second_deriv_diag(x, w)?;
        let n = self.dim();
        let mut out = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in 0..n {
                out[r][c] = j[r] * widths[r] * hf[r][c] * widths[c] * j[c];
            }
            out[r][r] += h[r] * g[r];
        }
        Ok(out)
    }

    /// Diagonal Jacobian of the sigmoidal warp at `x`.
    pub fn jacobian_diag(&self, x: &[f64]) -> Result<Vec<f64>> {
        sigmoid_jacobian_diag(x, self.warp()?)
    }

    /// Case-selected descent direction for the projected penalty merit:
    /// the gradient inside, the negative projected-gradient step on the
    /// boundary, and `Dπ ∇f(π(x)) + (x − π(x))/‖x − π(x)‖` outside.
    pub fn ppm_direction(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.kind != WarpKind::ProjectionPenalty {
            return Err(Error::NotProjectionPenalty);
        }
        check_dim(self.dim(), x.len())?;
        let (p, dist) = project_box(x, &self.unit)?;
        let g = self.objective.unit_gradient(&p)?;
        Ok(match classify(x) {
            Region::Interior => g,
            Region::Boundary => {
                let step: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi - gi).collect();
                let (q, _) = project_box(&step, &self.unit)?;
                q.iter().zip(&p).map(|(qi, pi)| pi - qi).collect()
            }
            Region::Exterior => x
                .iter()
                .zip(&p)
                .zip(&g)
                .map(|((&xi, &pi), &gi)| {
                    let inside = xi > BND_TOL && xi < 1.0 - BND_TOL;
                    let dpi = if inside { gi } else { 0.0 };
                    dpi + (xi - pi) / dist
                })
                .collect(),
        })
    }
}

/// Lipschitz constant of the sigmoidal merit gradient,
/// `½(σ_max² L̂ + σ_max L)`, given `L` for `∇f` and `L̂` for `f`.
pub fn lipschitz_bound(w: &SigmoidalWarp, l_grad: f64, l_fun: f64) -> f64 {
    let s = w.sigma_max();
    0.5 * (s * s * l_fun + s * l_grad)
}

/// [`lipschitz_bound`] using the objective's declared constants (in unit coordinates).
pub fn merit_lipschitz(objective: &Objective, w: &SigmoidalWarp) -> Result<f64> {
    let lip = objective.unit_lipschitz().ok_or(Error::MissingLipschitz)?;
    Ok(lipschitz_bound(w, lip.gradient(), lip.function))
}
