//! Objective oracle wrapper that refuses infeasible queries.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::warps::BoundBox;

static GLOBAL_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of infeasible objective queries attempted anywhere in this process.
pub fn global_violations() -> u64 {
    GLOBAL_VIOLATIONS.load(Ordering::SeqCst)
}

/// A smooth function defined on a box. Implementors never see infeasible points;
/// [`Objective`] filters them out.
pub trait Function: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64]) -> Vec<f64>;
    /// Dense row-major Hessian, if available.
    fn hessian(&self, _y: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
}

/// Lipschitz data in the objective's own (box) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Lipschitz {
    /// `L_i`: Lipschitz constant of the i-th partial derivative.
    pub partials: Vec<f64>,
    /// `L̂`: Lipschitz constant of the function itself.
    pub function: f64,
}

impl Lipschitz {
    /// `L = sqrt(Σ L_i²)`
    pub fn gradient(&self) -> f64 {
        self.partials.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn max_partial(&self) -> f64 {
        self.partials.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Default)]
struct Counters {
    evals: AtomicU64,
    grads: AtomicU64,
    hessians: AtomicU64,
    violations: AtomicU64,
}

/// Snapshot of an objective's oracle counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub evals: u64,
    pub grads: u64,
}

impl std::ops::Sub for EvalCounts {
    type Output = EvalCounts;
    fn sub(self, rhs: Self) -> Self {
        EvalCounts { evals: self.evals - rhs.evals, grads: self.grads - rhs.grads }
    }
}

/// Counted, feasibility-checked access to a [`Function`] over a [`BoundBox`].
///
/// `Clone` shares the counters; [`Objective::fork`] starts fresh ones.
#[derive(Clone)]
pub struct Objective {
    func: Arc<dyn Function>,
    bounds: BoundBox,
    lipschitz: Option<Lipschitz>,
    counters: Arc<Counters>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("dim", &self.dim())
            .field("bounds", &self.bounds)
            .field("lipschitz", &self.lipschitz)
            .field("counts", &self.counts())
            .finish()
    }
}

impl Objective {
    pub fn new(func: Arc<dyn Function>, bounds: BoundBox) -> Result<Self> {
        check_dim(bounds.dim(), func.dim())?;
        Ok(Self { func, bounds, lipschitz: None, counters: Arc::default() })
    }

    pub fn with_lipschitz(mut self, lipschitz: Lipschitz) -> Result<Self> {
        check_dim(self.dim(), lipschitz.partials.len())?;
        self.lipschitz = Some(lipschitz);
        Ok(self)
    }

    /// Same function and bounds, independent counters.
    pub fn fork(&self) -> Self {
        Self { counters: Arc::default(), ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &BoundBox {
        &self.bounds
    }

    pub fn lipschitz(&self) -> Option<&Lipschitz> {
        self.lipschitz.as_ref()
    }

    /// Lipschitz data for `g(y) = f(A(y))` on the unit cube.
    pub fn unit_lipschitz(&self) -> Option<Lipschitz> {
        let lip = self.lipschitz.as_ref()?;
        let widths = self.bounds.widths();
        let wmax = widths.iter().cloned().fold(0.0, f64::max);
        Some(Lipschitz {
            partials: lip.partials.iter().zip(&widths).map(|(l, w)| l * w * wmax).collect(),
            function: lip.function * wmax,
        })
    }

    fn guard(&self, y: &[f64]) -> Result<()> {
        check_dim(self.dim(), y.len())?;
        for (index, (&value, (&lower, &upper))) in
            y.iter().zip(self.bounds.lower().iter().zip(self.bounds.upper())).enumerate()
        {
            // NaN fails both comparisons and is rejected too
            if !(value >= lower && value <= upper) {
                self.counters.violations.fetch_add(1, Ordering::SeqCst);
                GLOBAL_VIOLATIONS.fetch_add(1, Ordering::SeqCst);
                return Err(Error::UnrelaxableViolation { index, value, lower, upper });
            }
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64]) -> Result<f64> {
        self.guard(y)?;
        self.counters.evals.fetch_add(1, Ordering::SeqCst);
        Ok(self.func.value(y))
    }

    pub fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.guard(y)?;
        self.counters.grads.fetch_add(1, Ordering::SeqCst);
        Ok(self.func.gradient(y))
    }

    pub fn hessian(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.guard(y)?;
        let h = self.func.hessian(y).ok_or(Error::MissingHessian)?;
        self.counters.hessians.fetch_add(1, Ordering::SeqCst);
        Ok(h)
    }

    pub fn has_hessian(&self) -> bool {
        let mid: Vec<f64> = self.bounds.lower().iter().zip(self.bounds.upper()).map(|(l, u)| 0.5 * (l + u)).collect();
        self.func.hessian(&mid).is_some()
    }

    pub fn counts(&self) -> EvalCounts {
        EvalCounts {
            evals: self.counters.evals.load(Ordering::SeqCst),
            grads: self.counters.grads.load(Ordering::SeqCst),
        }
    }

    /// Infeasible queries attempted through this objective's counters.
    pub fn violations(&self) -> u64 {
        self.counters.violations.load(Ordering::SeqCst)
    }

    /// Value and gradient on the unit cube, `g(y) = f(A(y))`, with the chain factor applied.
    pub fn unit_gradient(&self, y_unit: &[f64]) -> Result<Vec<f64>> {
        let v = crate::warps::affine_to_box(y_unit, &self.bounds)?;
        let g = self.gradient(&v)?;
        Ok(g.iter().zip(self.bounds.widths()).map(|(gi, w)| gi * w).collect())
    }

    pub fn unit_value(&self, y_unit: &[f64]) -> Result<f64> {
        let v = crate::warps::affine_to_box(y_unit, &self.bounds)?;
        self.value(&v)
    }
}
