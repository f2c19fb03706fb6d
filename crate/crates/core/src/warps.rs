//! Domain warpings from the unconstrained space onto a bounded decision set.
//!
//! The central map is the sigmoidal warp `S_σ(x)_i = 1 / (1 + exp(-σ_i x_i))`,
//! which sends `ℝⁿ` onto the open unit cube. Everything that touches a general
//! box `[l, u]` goes through the affine map `A(y) = y ⊙ (u - l) + l`, so the
//! sigmoidal machinery only ever has to reason about the unit cube.
//!
//! Also here: Euclidean projection onto a box, the period-2 triangle-wave
//! reflection, and the exponential / simplex warps for the nonnegative orthant
//! and the scaled simplex.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{check_dim, Error, Result};

/// Sigmoid outputs are clamped into `[FEAS_EPS, 1 - FEAS_EPS]`.
pub const FEAS_EPS: f64 = 1e-15;

/// Largest admissible entry of σ.
pub const SIGMA_CAP: f64 = 1e12;

// exp(709) is the last finite double; stay well clear of it.
const EXP_ARG_CAP: f64 = 700.0;

/// Finite box `l ≤ y ≤ u` with `l_i < u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: "box must have at least one coordinate".into(),
            });
        }
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::InvalidBounds { index, lower: l, upper: u });
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^n`
    pub fn unit(n: usize) -> Self {
        Self { lower: vec![0.0; n], upper: vec![1.0; n] }
    }

    /// `[lo, hi]^n`
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn is_unit(&self) -> bool {
        self.lower.iter().all(|&l| l == 0.0) && self.upper.iter().all(|&u| u == 1.0)
    }

    /// Closed-set membership.
    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && y
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }
}

/// Per-coordinate steepness parameters of the sigmoidal warp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidalWarp {
    sigma: Vec<f64>,
}

impl SigmoidalWarp {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.is_empty() {
            return Err(Error::InvalidParameter { name: "sigma", reason: "empty".into() });
        }
        for &s in &sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "sigma",
                    reason: format!("entries must be positive and finite, got {s}"),
                });
            }
            if s > SIGMA_CAP {
                return Err(Error::InvalidParameter {
                    name: "sigma",
                    reason: format!("entry {s} exceeds SIGMA_CAP = {SIGMA_CAP:e}"),
                });
            }
        }
        Ok(Self { sigma })
    }

    /// Like [`SigmoidalWarp::new`] but entries above `SIGMA_CAP` are pulled down to it.
    pub fn saturating(sigma: Vec<f64>) -> Result<Self> {
        Self::new(sigma.into_iter().map(|s| if s > SIGMA_CAP { SIGMA_CAP } else { s }).collect())
    }

    pub fn uniform(n: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; n])
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma.iter().cloned().fold(f64::MAX, f64::min)
    }

    /// Image of one coordinate and its complement `1 - y`, both clamped.
    fn coord(&self, i: usize, x: f64) -> (f64, f64) {
        let t = self.sigma[i] * x;
        let y = logistic(t).clamp(FEAS_EPS, 1.0 - FEAS_EPS);
        let c = logistic(-t).clamp(FEAS_EPS, 1.0 - FEAS_EPS);
        (y, c)
    }

    /// Whether the forward map is flat (clamped) at this coordinate.
    fn saturated(&self, i: usize, x: f64) -> bool {
        logistic(-(self.sigma[i] * x).abs()) < FEAS_EPS
    }
}

/// Point of the open unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitPoint(Vec<f64>);

impl UnitPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_interior(&coords)?;
        Ok(Self(coords))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for UnitPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn check_interior(y: &[f64]) -> Result<()> {
    for (index, &value) in y.iter().enumerate() {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::NotInterior { index, value });
        }
    }
    Ok(())
}

/// Numerically stable logistic function; never exponentiates a large positive argument.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `y_i = 1 / (1 + exp(-σ_i x_i))`, clamped into `[FEAS_EPS, 1 - FEAS_EPS]`.
pub fn sigmoid_forward(x: &[f64], w: &SigmoidalWarp) -> Result<UnitPoint> {
    check_dim(w.dim(), x.len())?;
    Ok(UnitPoint((0..x.len()).map(|i| w.coord(i, x[i]).0).collect()))
}

/// `x_i = log(y_i / (1 - y_i)) / σ_i`.
///
/// Lossy for `|σ_i x_i| > -log(FEAS_EPS)` because the forward map clamps there.
pub fn sigmoid_inverse(y: &[f64], w: &SigmoidalWarp) -> Result<Vec<f64>> {
    check_dim(w.dim(), y.len())?;
    check_interior(y)?;
    Ok(y.iter()
        .zip(w.sigma())
        .map(|(&v, &s)| (v.ln() - (-v).ln_1p()) / s)
        .collect())
}

/// Diagonal of the Jacobian of `S_σ`: `σ ⊙ y ⊙ (1 - y)`, and 0 where the map is clamped.
pub fn sigmoid_jacobian_diag(x: &[f64], w: &SigmoidalWarp) -> Result<Vec<f64>> {
    check_dim(w.dim(), x.len())?;
    Ok((0..x.len())
        .map(|i| {
            if w.saturated(i, x[i]) {
                return 0.0;
            }
            let (y, c) = w.coord(i, x[i]);
            w.sigma[i] * y * c
        })
        .collect())
}

/// Diagonal of the second derivative of `S_σ`: `σ² ⊙ y ⊙ (1 - y) ⊙ (1 - 2y)`.
pub fn sigmoid_second_deriv_diag(x: &[f64], w: &SigmoidalWarp) -> Result<Vec<f64>> {
    check_dim(w.dim(), x.len())?;
    Ok((0..x.len())
        .map(|i| {
            if w.saturated(i, x[i]) {
                return 0.0;
            }
            let (y, c) = w.coord(i, x[i]);
            let s = w.sigma[i];
            // 1 - 2y == c - y, which keeps precision near y = 1/2
            s * s * y * c * (c - y)
        })
        .collect())
}

/// Upper bound on `‖S⁻¹(y)‖∞` (σ = 1) over `y ∈ [a, 1 - a]^n`.
pub fn inverse_norm_bound(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 0.5) {
        return Err(Error::InvalidParameter {
            name: "a",
            reason: format!("must lie in (0, 1/2), got {a}"),
        });
    }
    Ok(((1.0 - a) / a).ln())
}

/// Euclidean projection onto the box and the distance moved.
pub fn project_box(x: &[f64], bounds: &BoundBox) -> Result<(Vec<f64>, f64)> {
    check_dim(bounds.dim(), x.len())?;
    let p: Vec<f64> = x
        .iter()
        .zip(bounds.lower().iter().zip(bounds.upper()))
        .map(|(&v, (&l, &u))| v.clamp(l, u))
        .collect();
    let dist = x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok((p, dist))
}

/// Period-2 triangle wave `R(x) = 2 |x/2 - ⌊x/2 + 1/2⌋|`, the identity on `[0, 1]`.
pub fn reflect(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| reflect_scalar(v)).collect()
}

fn reflect_scalar(v: f64) -> f64 {
    let h = 0.5 * v;
    2.0 * (h - (h + 0.5).floor()).abs()
}

/// Slope of the reflection, `+1` on `[2k, 2k+1)` and `-1` on `[2k+1, 2k+2)`.
pub fn reflect_derivative(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| if v.rem_euclid(2.0) < 1.0 { 1.0 } else { -1.0 })
        .collect()
}

/// `A(y) = y ⊙ (u - l) + l`, clamped into the box against rounding.
pub fn affine_to_box(y_unit: &[f64], bounds: &BoundBox) -> Result<Vec<f64>> {
    check_dim(bounds.dim(), y_unit.len())?;
    Ok(y_unit
        .iter()
        .zip(bounds.lower().iter().zip(bounds.upper()))
        .map(|(&y, (&l, &u))| (y * (u - l) + l).clamp(l, u))
        .collect())
}

/// Inverse of [`affine_to_box`].
pub fn affine_from_box(v: &[f64], bounds: &BoundBox) -> Result<Vec<f64>> {
    check_dim(bounds.dim(), v.len())?;
    Ok(v.iter()
        .zip(bounds.lower().iter().zip(bounds.upper()))
        .map(|(&v, (&l, &u))| (v - l) / (u - l))
        .collect())
}

fn check_sigma(sigma: &[f64]) -> Result<()> {
    SigmoidalWarp::new(sigma.to_vec()).map(|_| ())
}

/// `e^{σ ⊙ x}`, onto the open nonnegative orthant.
pub fn exp_warp(x: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    check_dim(sigma.len(), x.len())?;
    check_sigma(sigma)?;
    Ok(x.iter()
        .zip(sigma)
        .map(|(&v, &s)| (s * v).clamp(-EXP_ARG_CAP, EXP_ARG_CAP).exp())
        .collect())
}

/// `b e^{σ⊙x} / (1 + aᵀe^{σ⊙x})`, onto `{y > 0, aᵀy < b}`.
pub fn simplex_warp(x: &[f64], sigma: &[f64], a: &[f64], b: f64) -> Result<Vec<f64>> {
    check_dim(sigma.len(), x.len())?;
    check_dim(x.len(), a.len())?;
    check_sigma(sigma)?;
    if let Some(&bad) = a.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter { name: "a", reason: format!("entries must be positive, got {bad}") });
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter { name: "b", reason: format!("must be positive, got {b}") });
    }
    let t: Vec<f64> = x.iter().zip(sigma).map(|(&v, &s)| (s * v).clamp(-EXP_ARG_CAP, EXP_ARG_CAP)).collect();
    // shift by max(t, 0) so no exponent is positive
    let shift = t.iter().cloned().fold(0.0, f64::max);
    let e: Vec<f64> = t.iter().map(|&ti| (ti - shift).exp()).collect();
    let weighted: f64 = a.iter().zip(&e).map(|(ai, ei)| ai * ei).sum();
    let ratio = (weighted / ((-shift).exp() + weighted)).min(1.0 - FEAS_EPS);
    Ok(e.iter().map(|ei| b * ratio * ei / weighted).collect())
}
