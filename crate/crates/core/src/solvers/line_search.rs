use super::{DescentTarget, LineSearchParams};
use crate::error::Result;
use crate::linalg::{all_finite, axpy, dot};

/// Differences in merit value this small are indistinguishable from roundoff.
pub(crate) fn roundoff(f: f64) -> f64 {
    64.0 * f64::EPSILON * f.abs()
}

/// A trial point along `x + α d`.
#[derive(Debug, Clone)]
pub(crate) struct Probe {
    pub alpha: f64,
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
}

#[derive(Debug)]
pub(crate) enum Outcome {
    /// Conditions met, or at least a sufficient decrease found before running out of trials.
    Accepted(Probe),
    Failed,
}

/// Armijo backtracking. Only the accepted point has its gradient evaluated.
pub(crate) fn backtracking<T: DescentTarget + ?Sized>(
    target: &T,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    p: &LineSearchParams,
) -> Result<Outcome> {
    let slope = dot(g0, d);
    let mut alpha = alpha0;
    for _ in 0..p.max_steps {
        let xt = axpy(x, alpha, d);
        if all_finite(&xt) {
            let ft = target.value(&xt)?;
            if ft.is_finite() && ft <= f0 + p.c1 * alpha * slope {
                let g = target.slope(&xt)?;
                return Ok(Outcome::Accepted(Probe { alpha, x: xt, f: ft, g }));
            }
        }
        alpha *= p.backtrack;
    }
    Ok(Outcome::Failed)
}

/// Safeguarded cubic minimizer of the Hermite interpolant on `[a, b]`.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let lo = a.min(b);
    let hi = a.max(b);
    let margin = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let fallback = 0.5 * (a + b);
    if disc < 0.0 {
        return fallback;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if t.is_finite() && t >= lo + margin && t <= hi - margin {
        t
    } else {
        fallback
    }
}

struct Tracker {
    best: Option<Probe>,
}

impl Tracker {
    fn offer(&mut self, p: &Probe, f0: f64, c1: f64, slope: f64) {
        if p.f <= f0 + c1 * p.alpha * slope && self.best.as_ref().is_none_or(|b| p.f < b.f) {
            self.best = Some(p.clone());
        }
    }

    fn finish(self) -> Outcome {
        match self.best {
            Some(p) => Outcome::Accepted(p),
            None => Outcome::Failed,
        }
    }
}

fn probe<T: DescentTarget + ?Sized>(target: &T, x: &[f64], d: &[f64], alpha: f64) -> Result<Option<Probe>> {
    let xt = axpy(x, alpha, d);
    if !all_finite(&xt) {
        return Ok(None);
    }
    let f = target.value(&xt)?;
    if !f.is_finite() {
        return Ok(None);
    }
    let g = target.slope(&xt)?;
    if !all_finite(&g) {
        return Ok(None);
    }
    Ok(Some(Probe { alpha, x: xt, f, g }))
}

/// Strong-Wolfe bracketing and zoom.
pub(crate) fn strong_wolfe<T: DescentTarget + ?Sized>(
    target: &T,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    p: &LineSearchParams,
) -> Result<Outcome> {
    let slope0 = dot(g0, d);
    let mut tracker = Tracker { best: None };
    let mut budget = p.max_steps;
    // Hager–Zhang approximate Wolfe: once values agree to roundoff, only slopes carry information
    let approx = |c: &Probe, dc: f64| {
        (c.f - f0).abs() <= roundoff(f0) && dc >= p.c2 * slope0 && dc <= (2.0 * p.c1 - 1.0) * slope0
    };

    let mut prev = Probe { alpha: 0.0, x: x.to_vec(), f: f0, g: g0.to_vec() };
    let mut alpha = alpha0;
    let mut first = true;
    let (mut lo, mut hi);
    loop {
        if budget == 0 {
            return Ok(tracker.finish());
        }
        budget -= 1;
        let Some(cur) = probe(target, x, d, alpha)? else {
            // overflow along the ray: pull back toward the last good step
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        };
        tracker.offer(&cur, f0, p.c1, slope0);
        let dcur = dot(&cur.g, d);
        if approx(&cur, dcur) {
            return Ok(Outcome::Accepted(cur));
        }
        if cur.f > f0 + p.c1 * cur.alpha * slope0 || (!first && cur.f >= prev.f) {
            lo = prev;
            hi = cur;
            break;
        }
        if dcur.abs() <= -p.c2 * slope0 {
            return Ok(Outcome::Accepted(cur));
        }
        if dcur >= 0.0 {
            lo = cur;
            hi = prev;
            break;
        }
        alpha = 4.0 * cur.alpha;
        prev = cur;
        first = false;
    }

    // zoom: lo satisfies sufficient decrease and has the lowest f seen in the bracket
    while budget > 0 {
        budget -= 1;
        let (dlo, dhi) = (dot(&lo.g, d), dot(&hi.g, d));
        let a = cubic_step(lo.alpha, lo.f, dlo, hi.alpha, hi.f, dhi);
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
        let Some(cur) = probe(target, x, d, a)? else {
            hi = Probe { alpha: a, x: Vec::new(), f: f64::INFINITY, g: hi.g.clone() };
            continue;
        };
        tracker.offer(&cur, f0, p.c1, slope0);
        let dcur = dot(&cur.g, d);
        if approx(&cur, dcur) {
            return Ok(Outcome::Accepted(cur));
        }
        if cur.f > f0 + p.c1 * a * slope0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if dcur.abs() <= -p.c2 * slope0 {
                return Ok(Outcome::Accepted(cur));
            }
            if dcur * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Ok(tracker.finish())
}

/// Weak-Wolfe bisection/doubling search, tolerant of kinks in the merit.
pub(crate) fn weak_wolfe<T: DescentTarget + ?Sized>(
    target: &T,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    p: &LineSearchParams,
) -> Result<Outcome> {
    let slope0 = dot(g0, d);
    let mut tracker = Tracker { best: None };
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut alpha = alpha0;
    for _ in 0..p.max_steps {
        match probe(target, x, d, alpha)? {
            None => hi = alpha,
            Some(cur) => {
                tracker.offer(&cur, f0, p.c1, slope0);
                if cur.f > f0 + p.c1 * alpha * slope0 {
                    hi = alpha;
                } else if dot(&cur.g, d) < p.c2 * slope0 {
                    lo = alpha;
                } else {
                    return Ok(Outcome::Accepted(cur));
                }
            }
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
    }
    Ok(tracker.finish())
}
