//! Analytic bound-constrained test problems with known solutions.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::merit::{Function, Lipschitz, Objective};
use crate::warps::{affine_from_box, BoundBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    InteriorOpt,
    BoundaryOpt,
    Quadratic,
    SumOfSquares,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownOptimum {
    /// Minimizer in box coordinates.
    pub point: Vec<f64>,
    pub value: f64,
    /// Indices of active bounds at the minimizer.
    pub active: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub objective: Objective,
    /// Conditioned start, box coordinates.
    pub nominal_start: Vec<f64>,
    pub known_optimum: Option<KnownOptimum>,
    pub tags: Vec<Tag>,
}

impl Problem {
    /// Conditions `start` onto the interior of the objective's box.
    pub fn new(
        name: impl Into<String>,
        objective: Objective,
        start: Vec<f64>,
        known_optimum: Option<KnownOptimum>,
        tags: Vec<Tag>,
    ) -> Result<Self> {
        check_dim(objective.dim(), start.len())?;
        if let Some(opt) = &known_optimum {
            check_dim(objective.dim(), opt.point.len())?;
        }
        let nominal_start = condition_start(&start, objective.bounds(), START_MARGIN)?;
        Ok(Self { name: name.into(), objective, nominal_start, known_optimum, tags })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn bounds(&self) -> &BoundBox {
        self.objective.bounds()
    }

    /// The nominal start in unit-cube coordinates.
    pub fn unit_start(&self) -> Result<Vec<f64>> {
        affine_from_box(&self.nominal_start, self.bounds())
    }

    /// Same problem with fresh evaluation counters.
    pub fn fork(&self) -> Self {
        Self { objective: self.objective.fork(), ..self.clone() }
    }

    pub fn has_tag(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    /// Type code: Q (quadratic), S (sum of squares) or O (other).
    pub fn kind(&self) -> char {
        if self.has_tag(Tag::Quadratic) {
            'Q'
        } else if self.has_tag(Tag::SumOfSquares) {
            'S'
        } else {
            'O'
        }
    }
}

/// Relative inward shift applied to non-interior start components.
pub const START_MARGIN: f64 = 0.001;

/// Moves components on or outside a bound inward by `margin` times the bound width.
pub fn condition_start(y_raw: &[f64], bounds: &BoundBox, margin: f64) -> Result<Vec<f64>> {
    check_dim(bounds.dim(), y_raw.len())?;
    if !(margin > 0.0 && margin < 0.5) {
        return Err(Error::InvalidParameter { name: "margin", reason: format!("must lie in (0, 1/2), got {margin}") });
    }
    Ok(y_raw
        .iter()
        .zip(bounds.lower().iter().zip(bounds.upper()))
        .map(|(&y, (&l, &u))| {
            let w = u - l;
            if y <= l {
                l + margin * w
            } else if y >= u {
                u - margin * w
            } else {
                y
            }
        })
        .collect())
}

/// `½ Σ h_i (y_i − c_i)²`
struct Quadratic {
    h: Vec<f64>,
    c: Vec<f64>,
}

impl Function for Quadratic {
    fn dim(&self) -> usize {
        self.h.len()
    }
    fn value(&self, y: &[f64]) -> f64 {
        0.5 * y.iter().zip(&self.h).zip(&self.c).map(|((y, h), c)| h * (y - c) * (y - c)).sum::<f64>()
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.h).zip(&self.c).map(|((y, h), c)| h * (y - c)).collect()
    }
    fn hessian(&self, _y: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = self.h.len();
        Some((0..n).map(|r| (0..n).map(|c| if r == c { self.h[r] } else { 0.0 }).collect()).collect())
    }
}

/// Chained pairs `100 (v_{2i+1} − v_{2i}²)² + (1 − v_{2i})²` with `v = s·y + t`.
struct Rosenbrock {
    n: usize,
    scale: f64,
    shift: f64,
}

impl Function for Rosenbrock {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, y: &[f64]) -> f64 {
        y.chunks(2)
            .map(|p| {
                let (a, b) = (self.scale * p[0] + self.shift, self.scale * p[1] + self.shift);
                100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2)
            })
            .sum()
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let s = self.scale;
        y.chunks(2)
            .flat_map(|p| {
                let (a, b) = (s * p[0] + self.shift, s * p[1] + self.shift);
                [s * (-400.0 * a * (b - a * a) - 2.0 * (1.0 - a)), s * 200.0 * (b - a * a)]
            })
            .collect()
    }
    fn hessian(&self, y: &[f64]) -> Option<Vec<Vec<f64>>> {
        let s2 = self.scale * self.scale;
        let mut h = vec![vec![0.0; self.n]; self.n];
        for i in (0..self.n).step_by(2) {
            let (a, b) = (self.scale * y[i] + self.shift, self.scale * y[i + 1] + self.shift);
            h[i][i] = s2 * (1200.0 * a * a - 400.0 * b + 2.0);
            h[i][i + 1] = -400.0 * a * s2;
            h[i + 1][i] = -400.0 * a * s2;
            h[i + 1][i + 1] = 200.0 * s2;
        }
        Some(h)
    }
}

/// `Σ 2 a_i sin²(π (y_i − c_i))`, nonconvex with minima at `c`.
struct Cosine {
    a: Vec<f64>,
    c: Vec<f64>,
}

impl Function for Cosine {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn value(&self, y: &[f64]) -> f64 {
        (0..y.len()).map(|i| 2.0 * self.a[i] * (PI * (y[i] - self.c[i])).sin().powi(2)).sum()
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        (0..y.len()).map(|i| 2.0 * PI * self.a[i] * (2.0 * PI * (y[i] - self.c[i])).sin()).collect()
    }
    fn hessian(&self, y: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = y.len();
        let d: Vec<f64> = (0..n).map(|i| 4.0 * PI * PI * self.a[i] * (2.0 * PI * (y[i] - self.c[i])).cos()).collect();
        Some((0..n).map(|r| (0..n).map(|c| if r == c { d[r] } else { 0.0 }).collect()).collect())
    }
}

/// `Σ e^{y_i} − b_i y_i`
struct ExpLinear {
    b: Vec<f64>,
}

impl Function for ExpLinear {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.b).map(|(y, b)| y.exp() - b * y).sum()
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.b).map(|(y, b)| y.exp() - b).collect()
    }
    fn hessian(&self, y: &[f64]) -> Option<Vec<Vec<f64>>> {
        let n = y.len();
        Some((0..n).map(|r| (0..n).map(|c| if r == c { y[r].exp() } else { 0.0 }).collect()).collect())
    }
}

/// Deterministic well-spread start in `(lo, hi)`.
fn spread(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    const PHI: f64 = 0.618_033_988_749_894_9;
    (0..n).map(|i| lo + (hi - lo) * (0.1 + 0.8 * ((i as f64 + 1.0) * PHI).fract())).collect()
}

fn log_sweep(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// A separable quadratic with its exact box-constrained minimizer.
pub fn quadratic_problem(name: &str, h: Vec<f64>, c: Vec<f64>, bounds: BoundBox, start: Vec<f64>) -> Result<Problem> {
    let n = bounds.dim();
    check_dim(n, h.len())?;
    check_dim(n, c.len())?;
    if h.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter { name: "h", reason: "curvatures must be positive".into() });
    }
    let (l, u) = (bounds.lower().to_vec(), bounds.upper().to_vec());
    let point: Vec<f64> = (0..n).map(|i| c[i].clamp(l[i], u[i])).collect();
    let active: Vec<usize> = (0..n).filter(|&i| c[i] <= l[i] || c[i] >= u[i]).collect();
    let reach = |i: usize| (l[i] - c[i]).abs().max((u[i] - c[i]).abs());
    let lip = Lipschitz {
        partials: h.clone(),
        function: (0..n).map(|i| (h[i] * reach(i)).powi(2)).sum::<f64>().sqrt(),
    };
    let f = Quadratic { h, c };
    let value = f.value(&point);
    let tags = vec![if active.is_empty() { Tag::InteriorOpt } else { Tag::BoundaryOpt }, Tag::Quadratic];
    let objective = Objective::new(Arc::new(f), bounds)?.with_lipschitz(lip)?;
    Problem::new(name, objective, start, Some(KnownOptimum { point, value, active }), tags)
}

fn rosenbrock_problem(name: &str, n: usize, lo: f64, hi: f64) -> Result<Problem> {
    // in v-space the start is the classic (−1.2, 1) pattern and the minimizer is 1
    let bounds = BoundBox::uniform(n, lo, hi)?;
    let start = (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
    let f = Rosenbrock { n, scale: 1.0, shift: 0.0 };
    let objective = Objective::new(Arc::new(f), bounds)?;
    let opt = KnownOptimum { point: vec![1.0; n], value: 0.0, active: vec![] };
    Problem::new(name, objective, start, Some(opt), vec![Tag::InteriorOpt, Tag::SumOfSquares])
}

/// Rosenbrock on the unit square through `v = 4y − 2`.
fn unit_rosenbrock() -> Result<Problem> {
    let f = Rosenbrock { n: 2, scale: 4.0, shift: -2.0 };
    let objective = Objective::new(Arc::new(f), BoundBox::unit(2))?;
    let opt = KnownOptimum { point: vec![0.75, 0.75], value: 0.0, active: vec![] };
    Problem::new("rosenbrock_unit", objective, vec![0.2, 0.75], Some(opt), vec![Tag::InteriorOpt, Tag::SumOfSquares])
}

fn cosine_problem(name: &str, n: usize) -> Result<Problem> {
    let a = log_sweep(n, 0.5, 2.0);
    let c = spread(n, 0.3, 0.7);
    // start within half a period of each minimizer so the nearest basin is the interior one
    let start: Vec<f64> = c.iter().zip(spread(n + 3, -0.3, 0.3).into_iter().skip(3)).map(|(c, d)| c + d).collect();
    let lip = Lipschitz {
        partials: a.iter().map(|a| 4.0 * PI * PI * a).collect(),
        function: a.iter().map(|a| (2.0 * PI * a).powi(2)).sum::<f64>().sqrt(),
    };
    let opt = KnownOptimum { point: c.clone(), value: 0.0, active: vec![] };
    let objective = Objective::new(Arc::new(Cosine { a, c }), BoundBox::unit(n))?.with_lipschitz(lip)?;
    Problem::new(name, objective, start, Some(opt), vec![Tag::InteriorOpt, Tag::Other])
}

fn exp_problem(name: &str, n: usize) -> Result<Problem> {
    let b: Vec<f64> = (0..n).map(|i| [0.5, 2.0, 3.0][i % 3]).collect();
    let point: Vec<f64> = b.iter().map(|b| b.ln().clamp(0.0, 1.0)).collect();
    let active: Vec<usize> = (0..n).filter(|&i| b[i] < 1.0 || b[i] > std::f64::consts::E).collect();
    let e = std::f64::consts::E;
    let lip = Lipschitz {
        partials: vec![e; n],
        function: b.iter().map(|b| (1.0 - b).abs().max((e - b).abs()).powi(2)).sum::<f64>().sqrt(),
    };
    let f = ExpLinear { b };
    let value = f.value(&point);
    let objective = Objective::new(Arc::new(f), BoundBox::unit(n))?.with_lipschitz(lip)?;
    let opt = KnownOptimum { point, value, active };
    Problem::new(name, objective, spread(n, 0.0, 1.0), Some(opt), vec![Tag::BoundaryOpt, Tag::Other])
}

/// Quadratic with minimizer `c` pushed past the bounds on `active` coordinates.
fn active_quadratic(name: &str, n: usize, active: usize) -> Result<Problem> {
    let h = log_sweep(n, 1.0, 10.0);
    let mut c = spread(n, 0.2, 0.8);
    for (j, ci) in c.iter_mut().enumerate().take(active) {
        *ci = if j % 2 == 0 { 1.3 } else { -0.3 };
    }
    quadratic_problem(name, h, c, BoundBox::unit(n), spread(n + 7, 0.0, 1.0).split_off(7))
}

fn build() -> Result<Vec<Problem>> {
    let unit2 = BoundBox::unit(2);
    let mut out = vec![
        quadratic_problem("skewed_corner_quadratic_2", vec![100.0, 2.0], vec![1.1, 1.1], unit2, vec![0.2, 0.6])?,
        unit_rosenbrock()?,
    ];
    for (n, kmax) in [(5, 10.0), (50, 100.0), (200, 10.0)] {
        out.push(quadratic_problem(
            &format!("centroid_quadratic_{n}"),
            log_sweep(n, 1.0, kmax),
            vec![0.5; n],
            BoundBox::unit(n),
            spread(n, 0.0, 1.0),
        )?);
    }
    out.push(active_quadratic("active_quadratic_10", 10, 3)?);
    out.push(active_quadratic("active_quadratic_200", 200, 50)?);
    out.push(active_quadratic("corner_quadratic_5", 5, 5)?);
    out.push(cosine_problem("cosine_10", 10)?);
    out.push(cosine_problem("cosine_50", 50)?);
    {
        let n = 20;
        let mut c: Vec<f64> = (0..n).map(|i| -2.0 + 0.35 * i as f64).collect();
        c[n - 2] = 6.0;
        c[n - 1] = -4.5;
        let bounds = BoundBox::uniform(n, -3.0, 5.0)?;
        out.push(quadratic_problem("shifted_box_quadratic_20", log_sweep(n, 0.5, 5.0), c, bounds, spread(n, -3.0, 5.0))?);
    }
    out.push(rosenbrock_problem("ext_rosenbrock_10", 10, -2.0, 2.0)?);
    out.push(exp_problem("exp_linear_6", 6)?);
    Ok(out)
}

/// The built-in problems, each with fresh counters.
pub fn registry() -> Vec<Problem> {
    build().expect("built-in problems are well formed")
}

pub fn by_name(name: &str) -> Result<Problem> {
    registry().into_iter().find(|p| p.name == name).ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

/// Registry summary: name, type code, dimension, active bounds at the optimum.
pub fn table(problems: &[Problem]) -> String {
    let mut s = format!("{:<28} {:>4} {:>5} {:>7}\n", "problem", "type", "n", "active");
    for p in problems {
        let active = p.known_optimum.as_ref().map_or("?".to_string(), |o| o.active.len().to_string());
        let _ = writeln!(s, "{:<28} {:>4} {:>5} {:>7}", p.name, p.kind(), p.dim(), active);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::{active_set, epsilon_stationarity, ACTIVE_REL_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn condition_start_examples() {
        let b1 = BoundBox::unit(2);
        assert_eq!(condition_start(&[0.0, 0.5], &b1, 0.001).unwrap(), vec![0.001, 0.5]);
        assert_eq!(condition_start(&[1.2], &BoundBox::unit(1), 0.001).unwrap(), vec![0.999]);
        assert_eq!(condition_start(&[0.3, 0.7], &b1, 0.001).unwrap(), vec![0.3, 0.7]);
        let b = BoundBox::uniform(1, -2.0, 2.0).unwrap();
        assert_eq!(condition_start(&[-2.0], &b, 0.001).unwrap(), vec![-1.996]);
    }

    #[test]
    fn registry_shape() {
        let ps = registry();
        assert!(ps.len() >= 12);
        let dims: std::collections::BTreeSet<usize> = ps.iter().map(|p| p.dim()).collect();
        for n in [2, 5, 10, 50, 200] {
            assert!(dims.contains(&n), "missing n = {n}");
        }
        for tag in [Tag::InteriorOpt, Tag::BoundaryOpt, Tag::Quadratic, Tag::SumOfSquares, Tag::Other] {
            assert!(ps.iter().any(|p| p.has_tag(tag)));
        }
        let names: std::collections::BTreeSet<&str> = ps.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names.len(), ps.len());
    }

    #[test]
    fn starts_are_interior() {
        for p in registry() {
            let y = p.unit_start().unwrap();
            assert!(y.iter().all(|v| *v > 0.0 && *v < 1.0), "{}", p.name);
        }
    }

    #[test]
    fn known_optima_are_stationary() {
        for p in registry() {
            let opt = p.known_optimum.as_ref().unwrap();
            let y = affine_from_box(&opt.point, p.bounds()).unwrap();
            let g = p.objective.unit_gradient(&y).unwrap();
            let rep = epsilon_stationarity(&y, &g).unwrap();
            assert!(rep.epsilon <= 1e-10, "{}: ε = {}", p.name, rep.epsilon);
            assert!(rep.lambda.iter().chain(&rep.mu).all(|m| *m <= 0.0));
            assert_eq!(active_set(&opt.point, p.bounds(), ACTIVE_REL_TOL).unwrap(), opt.active, "{}", p.name);
            assert!((p.objective.value(&opt.point).unwrap() - opt.value).abs() <= 1e-12 * opt.value.abs().max(1.0));
        }
    }

    #[test]
    fn skewed_corner_and_rosenbrock_optima() {
        let p = by_name("skewed_corner_quadratic_2").unwrap();
        let opt = p.known_optimum.unwrap();
        assert_eq!(opt.point, vec![1.0, 1.0]);
        assert_eq!(opt.active, vec![0, 1]);
        let r = by_name("rosenbrock_unit").unwrap();
        assert!(r.has_tag(Tag::InteriorOpt));
        assert_eq!(r.known_optimum.unwrap().point, vec![0.75, 0.75]);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in registry() {
            let (l, u) = (p.bounds().lower().to_vec(), p.bounds().upper().to_vec());
            for _ in 0..20 {
                let y: Vec<f64> = (0..p.dim()).map(|i| rng.gen_range(l[i] + 1e-3..u[i] - 1e-3)).collect();
                let g = p.objective.gradient(&y).unwrap();
                let scale = crate::linalg::norm_inf(&g).max(1.0);
                for i in 0..p.dim() {
                    let h = 1e-6 * (u[i] - l[i]);
                    let (mut a, mut b) = (y.clone(), y.clone());
                    a[i] += h;
                    b[i] -= h;
                    let fd = (p.objective.value(&a).unwrap() - p.objective.value(&b).unwrap()) / (2.0 * h);
                    assert!((fd - g[i]).abs() / scale < 1e-6, "{} coord {i}: {fd} vs {}", p.name, g[i]);
                }
            }
        }
    }

    #[test]
    fn hessians_match_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for p in registry().into_iter().filter(|p| p.dim() <= 10) {
            let (l, u) = (p.bounds().lower().to_vec(), p.bounds().upper().to_vec());
            let y: Vec<f64> = (0..p.dim()).map(|i| rng.gen_range(l[i] + 0.1..u[i] - 0.1)).collect();
            let hm = p.objective.hessian(&y).unwrap();
            for j in 0..p.dim() {
                let h = 1e-6;
                let (mut a, mut b) = (y.clone(), y.clone());
                a[j] += h;
                b[j] -= h;
                let (ga, gb) = (p.objective.gradient(&a).unwrap(), p.objective.gradient(&b).unwrap());
                for i in 0..p.dim() {
                    let fd = (ga[i] - gb[i]) / (2.0 * h);
                    assert!((fd - hm[i][j]).abs() <= 1e-4 * hm[i][j].abs().max(1.0), "{} ({i},{j})", p.name);
                }
            }
        }
    }

    #[test]
    fn objectives_reject_infeasible_points() {
        let p = by_name("centroid_quadratic_5").unwrap().fork();
        let mut y = p.nominal_start.clone();
        y[2] = 1.5;
        assert!(p.objective.value(&y).is_err());
        assert_eq!(p.objective.violations(), 1);
    }

    #[test]
    fn fork_isolates_counters() {
        let p = by_name("cosine_10").unwrap();
        let q = p.fork();
        q.objective.value(&q.nominal_start).unwrap();
        assert_eq!(p.objective.counts().evals, 0);
        assert_eq!(q.objective.counts().evals, 1);
    }

    #[test]
    fn unknown_names_are_reported() {
        assert!(matches!(by_name("nope"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn table_lists_every_problem() {
        let ps = registry();
        let t = table(&ps);
        assert_eq!(t.lines().count(), ps.len() + 1);
        assert!(t.contains("skewed_corner_quadratic_2"));
    }
}
