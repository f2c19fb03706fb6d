//! First-order optimality diagnostics for the unit-cube problem.
//!
//! Sign convention: multipliers satisfy `λ, μ ≤ 0` and
//! `∇f + Σ λ_i e_i − Σ μ_i e_i = 0` at a KKT point.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::norm;
use crate::warps::{project_box, BoundBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Smallest ε certified by the chosen multipliers.
    pub epsilon: f64,
    /// Lower-bound multipliers, all `≤ 0`.
    pub lambda: Vec<f64>,
    /// Upper-bound multipliers, all `≤ 0`.
    pub mu: Vec<f64>,
    pub stationarity_violation: Vec<f64>,
    pub slackness_violation: Vec<f64>,
}

fn check_unit_feasible(y: &[f64]) -> Result<()> {
    for (index, &value) in y.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Infeasible { index, value });
        }
    }
    Ok(())
}

/// Certify `ε`-stationarity of a feasible unit-cube point `y` with gradient `grad`.
///
/// Per coordinate, the multipliers minimize
/// `max(|g + λ − μ|, |λ y|, |μ (1 − y)|)` over `λ, μ ≤ 0`. Only one of the two
/// is ever nonzero; for `g ≥ 0` the optimum is `λ = −g / (1 + y)`, giving
/// violation `g y / (1 + y)`, and symmetrically for `g < 0` at the upper bound.
pub fn epsilon_stationarity(y: &[f64], grad: &[f64]) -> Result<KktReport> {
    check_dim(y.len(), grad.len())?;
    check_unit_feasible(y)?;
    let n = y.len();
    let mut report = KktReport {
        epsilon: 0.0,
        lambda: vec![0.0; n],
        mu: vec![0.0; n],
        stationarity_violation: vec![0.0; n],
        slackness_violation: vec![0.0; n],
    };
    for i in 0..n {
        let g = grad[i];
        let (lambda, mu) = if g > 0.0 {
            (-g / (1.0 + y[i]), 0.0)
        } else if g < 0.0 {
            (0.0, g / (2.0 - y[i]))
        } else {
            (0.0, 0.0)
        };
        let stat = (g + lambda - mu).abs();
        let slack = (lambda * y[i]).abs().max((mu * (1.0 - y[i])).abs());
        report.lambda[i] = lambda;
        report.mu[i] = mu;
        report.stationarity_violation[i] = stat;
        report.slackness_violation[i] = slack;
        report.epsilon = report.epsilon.max(stat).max(slack);
    }
    Ok(report)
}

/// Violations produced by a caller-supplied multiplier pair.
pub fn kkt_violation(y: &[f64], grad: &[f64], lambda: &[f64], mu: &[f64]) -> Result<f64> {
    check_dim(y.len(), grad.len())?;
    check_dim(y.len(), lambda.len())?;
    check_dim(y.len(), mu.len())?;
    if lambda.iter().chain(mu).any(|&m| m > 0.0) {
        return Err(Error::InvalidParameter { name: "multipliers", reason: "must be nonpositive".into() });
    }
    Ok((0..y.len())
        .map(|i| {
            let stat = (grad[i] + lambda[i] - mu[i]).abs();
            let slack = (lambda[i] * y[i]).abs().max((mu[i] * (1.0 - y[i])).abs());
            stat.max(slack)
        })
        .fold(0.0, f64::max))
}

/// `‖π(y − ∇f(y)) − y‖` over a general box.
pub fn projected_gradient_norm(y: &[f64], grad: &[f64], bounds: &BoundBox) -> Result<f64> {
    check_dim(bounds.dim(), y.len())?;
    check_dim(y.len(), grad.len())?;
    if !bounds.contains(y) {
        let index = (0..y.len())
            .find(|&i| !(bounds.lower()[i] <= y[i] && y[i] <= bounds.upper()[i]))
            .unwrap_or(0);
        return Err(Error::Infeasible { index, value: y[index] });
    }
    let trial: Vec<f64> = y.iter().zip(grad).map(|(a, b)| a - b).collect();
    let (p, _) = project_box(&trial, bounds)?;
    Ok(norm(&crate::linalg::sub(&p, y)))
}

/// `ε ≤ τ ‖∇f(y₀)‖`
pub fn relative_kkt_satisfied(report: &KktReport, grad_at_start: &[f64], tau: f64) -> Result<bool> {
    let scale = norm(grad_at_start);
    if scale == 0.0 {
        return Err(Error::DegenerateNormalization);
    }
    Ok(report.epsilon <= tau * scale)
}

/// Bound on `|∂_i f(y)|` implied by `|∂_i f̃(x)| ≤ δ_i` at an interior component.
pub fn thm4_interior_bound(delta_i: f64, sigma_i: f64, y_i: f64) -> Result<f64> {
    if !(sigma_i > 0.0) {
        return Err(Error::InvalidParameter { name: "sigma", reason: format!("must be positive, got {sigma_i}") });
    }
    if !(y_i > 0.0 && y_i < 1.0) {
        return Err(Error::NotInterior { index: 0, value: y_i });
    }
    Ok(delta_i / (sigma_i * y_i * (1.0 - y_i)))
}

/// Bound on `|∂_i f(y) + λ*_i|` for a component whose KKT value lies on the boundary;
/// `big_delta = |1 − y_i − y*_i|`.
pub fn thm4_boundary_bound(delta_i: f64, sigma_i: f64, l_i: f64, grad_i: f64, big_delta: f64) -> Result<f64> {
    if !(sigma_i > 0.0) {
        return Err(Error::InvalidParameter { name: "sigma", reason: format!("must be positive, got {sigma_i}") });
    }
    if grad_i == 0.0 {
        return Err(Error::InvalidParameter { name: "grad", reason: "partial derivative must be nonzero".into() });
    }
    if !(big_delta > 0.0) {
        return Err(Error::InvalidParameter { name: "Delta", reason: format!("must be positive, got {big_delta}") });
    }
    Ok(l_i * delta_i / (grad_i.abs() * sigma_i * big_delta))
}

/// Default relative distance for calling a bound active.
pub const ACTIVE_REL_TOL: f64 = 1e-3;

/// Indices whose distance to the nearest bound is below `rel_tol` times the box width.
pub fn active_set(y: &[f64], bounds: &BoundBox, rel_tol: f64) -> Result<Vec<usize>> {
    check_dim(bounds.dim(), y.len())?;
    Ok((0..y.len())
        .filter(|&i| {
            let (l, u) = (bounds.lower()[i], bounds.upper()[i]);
            (y[i] - l).min(u - y[i]) < rel_tol * (u - l)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interior_stationary() {
        let r = epsilon_stationarity(&[0.3, 0.6], &[0.0, 0.0]).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert!(r.lambda.iter().chain(&r.mu).all(|&m| m == 0.0));
    }

    #[test]
    fn exact_kkt_at_active_lower_bound() {
        let r = epsilon_stationarity(&[0.0], &[3.0]).unwrap();
        assert_eq!(r.lambda, vec![-3.0]);
        assert_eq!(r.epsilon, 0.0);
        let r = epsilon_stationarity(&[1.0], &[-2.0]).unwrap();
        assert_eq!(r.mu, vec![-2.0]);
        assert_eq!(r.epsilon, 0.0);
    }

    #[test]
    fn interior_with_gradient_balances_residuals() {
        // three sign patterns give 3, 1.5 and (infeasible); the balanced
        // choice λ = -g/(1+y) = -2 does better at 1.0
        let r = epsilon_stationarity(&[0.5], &[3.0]).unwrap();
        assert!((r.epsilon - 1.0).abs() < 1e-15);
        assert!((r.lambda[0] + 2.0).abs() < 1e-15);
        assert!(r.epsilon <= 1.5);
    }

    #[test]
    fn rejects_infeasible() {
        assert!(matches!(epsilon_stationarity(&[1.2], &[0.0]), Err(Error::Infeasible { .. })));
        assert!(projected_gradient_norm(&[-0.1], &[0.0], &BoundBox::unit(1)).is_err());
    }

    #[test]
    fn projected_gradient_examples() {
        let b = BoundBox::unit(2);
        assert_eq!(projected_gradient_norm(&[0.4, 0.4], &[0.0, 0.0], &b).unwrap(), 0.0);
        assert_eq!(projected_gradient_norm(&[0.0, 0.5], &[3.0, 0.0], &b).unwrap(), 0.0);
        assert!((projected_gradient_norm(&[0.5, 0.5], &[0.2, 0.0], &b).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn relative_kkt_examples() {
        let mut r = epsilon_stationarity(&[0.5], &[0.0]).unwrap();
        assert!(relative_kkt_satisfied(&r, &[1.0], 1e-12).unwrap());
        r.epsilon = 1e-3;
        assert!(relative_kkt_satisfied(&r, &[6.0, 8.0], 1e-4).unwrap());
        r.epsilon = 2e-3;
        assert!(!relative_kkt_satisfied(&r, &[6.0, 8.0], 1e-4).unwrap());
        assert_eq!(relative_kkt_satisfied(&r, &[0.0], 1e-2).unwrap_err(), Error::DegenerateNormalization);
    }

    #[test]
    fn thm4_examples() {
        let b = thm4_interior_bound(1.0, 1.0, 0.1).unwrap();
        assert!((b - 1.0 / 0.09).abs() < 1e-12 && b <= 12.0);
        assert_eq!(thm4_interior_bound(1.0, 4.0, 0.5).unwrap(), 1.0);
        assert!(thm4_interior_bound(1.0, 0.0, 0.5).is_err());
        assert!(thm4_interior_bound(1.0, 1.0, 1.0).is_err());
        assert_eq!(thm4_boundary_bound(1.0, 2.0, 4.0, -2.0, 0.5).unwrap(), 2.0);
        assert!(thm4_boundary_bound(1.0, 2.0, 4.0, 0.0, 0.5).is_err());
        assert!(thm4_boundary_bound(1.0, 2.0, 4.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn active_set_examples() {
        let b = BoundBox::unit(2);
        assert_eq!(active_set(&[0.0005, 0.5], &b, ACTIVE_REL_TOL).unwrap(), vec![0]);
        assert!(active_set(&[0.5, 0.5], &b, ACTIVE_REL_TOL).unwrap().is_empty());
        assert_eq!(active_set(&[0.9995], &BoundBox::unit(1), ACTIVE_REL_TOL).unwrap(), vec![0]);
        let wide = BoundBox::new(vec![-10.0], vec![10.0]).unwrap();
        assert_eq!(active_set(&[9.99], &wide, ACTIVE_REL_TOL).unwrap(), vec![0]);
    }

    #[test]
    fn supplied_multipliers() {
        assert_eq!(kkt_violation(&[0.0, 1.0], &[3.0, -1.0], &[-3.0, 0.0], &[0.0, -1.0]).unwrap(), 0.0);
        assert!(kkt_violation(&[0.0], &[3.0], &[3.0], &[0.0]).is_err());
    }

    /// Dense grid over (λ, μ) ∈ [-2|g|, 0]², independent of the closed form.
    fn grid_eps(y: f64, g: f64, steps: usize) -> f64 {
        let lo = -2.0 * g.abs();
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            let lambda = lo * a as f64 / steps as f64;
            for b in 0..=steps {
                let mu = lo * b as f64 / steps as f64;
                let v = (g + lambda - mu).abs().max((lambda * y).abs()).max((mu * (1.0 - y)).abs());
                best = best.min(v);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let steps = 800;
        for _ in 0..50 {
            let y: f64 = if rng.gen_bool(0.2) { rng.gen_range(0..2) as f64 } else { rng.gen() };
            let g: f64 = rng.gen_range(-5.0..5.0);
            let exact = epsilon_stationarity(&[y], &[g]).unwrap().epsilon;
            let brute = grid_eps(y, g, steps);
            // grid resolution is 2|g|/steps; the max of three residuals moves at most that much per cell
            let res = 2.0 * 2.0 * g.abs() / steps as f64;
            assert!(exact <= brute + 1e-12, "closed form worse than grid: {exact} vs {brute}");
            assert!(brute - exact <= res, "y={y} g={g}: {exact} vs {brute}");
        }
    }

    proptest! {
        #[test]
        fn multipliers_dual_feasible(y in prop::collection::vec(0.0f64..=1.0, 1..6), g in prop::collection::vec(-10.0f64..10.0, 6)) {
            let g = &g[..y.len()];
            let r = epsilon_stationarity(&y, g).unwrap();
            prop_assert!(r.lambda.iter().chain(&r.mu).all(|&m| m <= 0.0));
            let eps = r.stationarity_violation.iter().chain(&r.slackness_violation).cloned().fold(0.0, f64::max);
            prop_assert_eq!(eps, r.epsilon);
        }

        #[test]
        fn epsilon_monotone_in_gradient_scale(y in prop::collection::vec(0.0f64..=1.0, 1..6), g in prop::collection::vec(-10.0f64..10.0, 6), c in 1.0f64..10.0) {
            let g = &g[..y.len()];
            let scaled: Vec<f64> = g.iter().map(|v| v * c).collect();
            let a = epsilon_stationarity(&y, g).unwrap().epsilon;
            let b = epsilon_stationarity(&y, &scaled).unwrap().epsilon;
            prop_assert!(b >= a);
        }

        #[test]
        fn zero_projected_gradient_means_zero_epsilon(y in prop::collection::vec(0.0f64..=1.0, 1..6), g in prop::collection::vec(-10.0f64..10.0, 6), snap in prop::collection::vec(0usize..3, 6)) {
            // build points where the projected gradient vanishes: each coordinate either
            // has zero gradient or sits on the bound the gradient pushes into
            let n = y.len();
            let mut yy = y.clone();
            let mut gg = g[..n].to_vec();
            for i in 0..n {
                match snap[i] {
                    0 => gg[i] = 0.0,
                    1 => { gg[i] = gg[i].abs(); yy[i] = 0.0 }
                    _ => { gg[i] = -gg[i].abs(); yy[i] = 1.0 }
                }
            }
            let pg = projected_gradient_norm(&yy, &gg, &BoundBox::unit(n)).unwrap();
            prop_assert!(pg == 0.0);
            prop_assert!(epsilon_stationarity(&yy, &gg).unwrap().epsilon <= 1e-12);
        }
    }
}
