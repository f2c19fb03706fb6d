//! Benchmark campaigns and data profiles.
//!
//! A problem counts as solved by a solver at tolerance τ once some iterate `y`
//! is ε-stationary with `ε ≤ τ ‖∇f(y₀)‖`. The cost is the number of objective
//! evaluations spent up to that iterate, including the one at the start.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adawarp::{adawarp_with, AdaWarpConfig, Sigma0};
use crate::error::{Error, Result};
use crate::kkt::epsilon_stationarity;
use crate::linalg::norm;
use crate::merit::{EvalCounts, MeritFunction, Objective};
use crate::problems::Problem;
use crate::solvers::{lbfgs_with, nonsmooth_qn_ppm_with, projected_gradient_baseline_with, Iterate, SolverConfig};
use crate::warps::{sigmoid_inverse, SigmoidalWarp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverSpec {
    AdaWarp,
    /// L-BFGS on the sigmoidal merit with σ held fixed.
    FixedSigma(f64),
    Ppm,
    ProjgradBaseline,
}

impl SolverSpec {
    pub fn defaults() -> Vec<SolverSpec> {
        vec![
            SolverSpec::AdaWarp,
            SolverSpec::FixedSigma(0.001),
            SolverSpec::FixedSigma(1.0),
            SolverSpec::FixedSigma(10.0),
            SolverSpec::Ppm,
            SolverSpec::ProjgradBaseline,
        ]
    }
}

impl fmt::Display for SolverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverSpec::AdaWarp => f.write_str("adawarp"),
            SolverSpec::FixedSigma(s) => write!(f, "fixed-sigma:{s}"),
            SolverSpec::Ppm => f.write_str("ppm"),
            SolverSpec::ProjgradBaseline => f.write_str("projgrad-baseline"),
        }
    }
}

impl FromStr for SolverSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::InvalidParameter { name: "solver", reason: format!("unknown solver `{s}`") };
        match s {
            "adawarp" => Ok(SolverSpec::AdaWarp),
            "ppm" => Ok(SolverSpec::Ppm),
            "projgrad-baseline" => Ok(SolverSpec::ProjgradBaseline),
            _ => {
                let sigma: f64 = s.strip_prefix("fixed-sigma:").ok_or_else(unknown)?.parse().map_err(|_| unknown())?;
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(SolverSpec::FixedSigma(sigma))
                } else {
                    Err(unknown())
                }
            }
        }
    }
}

impl Serialize for SolverSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SolverSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub taus: Vec<f64>,
    /// Evaluation budget per run, in units of `n + 1`.
    pub budget: u64,
    /// Worker cap; all cores when absent.
    pub jobs: Option<usize>,
    pub adawarp: AdaWarpConfig,
    /// Gradient tolerance for the single-solve solvers; small enough that the
    /// relative KKT test, not this, ends the useful part of a run.
    pub delta: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            taus: vec![1e-2, 1e-4],
            budget: 1000,
            jobs: None,
            adawarp: AdaWarpConfig {
                sigma0: Sigma0::Scalar(1e-3),
                epsilon: f64::MIN_POSITIVE,
                delta: 1e-8,
                max_outer_iters: 200,
                ..Default::default()
            },
            delta: 1e-12,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidParameter { name: "taus", reason: "need at least one positive tolerance".into() });
        }
        if self.budget == 0 {
            return Err(Error::InvalidParameter { name: "budget", reason: "must be positive".into() });
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter { name: "jobs", reason: "must be at least 1".into() });
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter { name: "delta", reason: "must be positive".into() });
        }
        self.adawarp.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    /// Objective evaluations spent up to this iterate.
    pub evals: u64,
    pub epsilon: f64,
    /// `ε / ‖∇f(y₀)‖`, or plain `ε` when `∇f(y₀) = 0`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub problem: String,
    pub solver: String,
    pub tau: f64,
    pub n: usize,
    /// Evaluations to the first iterate meeting `tau`; `None` if never within budget.
    pub t_pa: Option<u64>,
    pub history: Vec<HistoryPoint>,
    /// Objective counter delta over the whole run.
    pub evals: EvalCounts,
    /// Infeasible objective queries attempted during the run.
    pub violations: u64,
    pub error: Option<String>,
}

/// Tracks the relative KKT measure of observed iterates with an uncharged copy of the objective.
struct Auditor<'a> {
    audit: Objective,
    charged: &'a Objective,
    scale: f64,
    limit: u64,
    target: f64,
    history: Vec<HistoryPoint>,
    failure: Option<Error>,
}

impl Auditor<'_> {
    fn observe(&mut self, it: &Iterate<'_>) -> ControlFlow<()> {
        let evals = self.charged.counts().evals;
        if evals > self.limit {
            return ControlFlow::Break(());
        }
        let report = self.audit.unit_gradient(it.image).and_then(|g| epsilon_stationarity(it.image, &g));
        match report {
            Ok(r) => {
                // a stationary start has no scale; fall back to the absolute measure
                let ratio = if self.scale > 0.0 { r.epsilon / self.scale } else { r.epsilon };
                self.history.push(HistoryPoint { evals, epsilon: r.epsilon, ratio });
                if ratio <= self.target {
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            }
            Err(e) => {
                self.failure = Some(e);
                ControlFlow::Break(())
            }
        }
    }
}

fn run_cell(problem: &Problem, solver: SolverSpec, cfg: &CampaignConfig) -> Vec<RunRecord> {
    let p = problem.fork();
    let n = p.dim();
    let limit = cfg.budget * (n as u64 + 1);
    let target = cfg.taus.iter().cloned().fold(f64::INFINITY, f64::min);
    let audit = p.objective.fork();

    let outcome = (|| -> Result<(Vec<HistoryPoint>, Option<Error>)> {
        let y0 = p.unit_start()?;
        let scale = norm(&audit.unit_gradient(&y0)?);
        let mut auditor =
            Auditor { audit: audit.clone(), charged: &p.objective, scale, limit, target, history: Vec::new(), failure: None };
        let mut observer = |it: &Iterate<'_>| auditor.observe(it);
        let solver_cfg = SolverConfig { delta: cfg.delta, max_iters: usize::MAX, max_evals: Some(limit), ..Default::default() };
        match solver {
            SolverSpec::AdaWarp => {
                let ada = AdaWarpConfig { max_evals: Some(limit), tau: Some(target), ..cfg.adawarp.clone() };
                let trace = adawarp_with(&p.objective, &y0, &ada, &mut observer)?;
                if let Some(msg) = trace.error {
                    log::debug!("{} on {}: {msg}", solver, p.name);
                }
            }
            SolverSpec::FixedSigma(sigma) => {
                let w = SigmoidalWarp::uniform(n, sigma)?;
                let x0 = sigmoid_inverse(&y0, &w)?;
                let m = MeritFunction::sigmoidal(p.objective.clone(), w)?;
                lbfgs_with(&m, &x0, &solver_cfg, &mut observer)?;
            }
            SolverSpec::Ppm => {
                let m = MeritFunction::projection_penalty(p.objective.clone());
                nonsmooth_qn_ppm_with(&m, &y0, &solver_cfg, &mut observer)?;
            }
            SolverSpec::ProjgradBaseline => {
                projected_gradient_baseline_with(&p.objective, &y0, &solver_cfg, &mut observer)?;
            }
        }
        Ok((auditor.history, auditor.failure))
    })();

    let (history, error) = match outcome {
        Ok((h, failure)) => (h, failure.map(|e| e.to_string())),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    cfg.taus
        .iter()
        .map(|&tau| RunRecord {
            problem: p.name.clone(),
            solver: solver.to_string(),
            tau,
            n,
            t_pa: history.iter().find(|h| h.ratio <= tau && h.evals <= limit).map(|h| h.evals),
            history: history.clone(),
            evals: p.objective.counts(),
            violations: p.objective.violations(),
            error: error.clone(),
        })
        .collect()
}

/// One record per (problem, solver, τ), ordered problem-major, then solver, then τ.
/// Failed runs are recorded as unsolved.
pub fn run_campaign(problems: &[Problem], solvers: &[SolverSpec], cfg: &CampaignConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if problems.is_empty() {
        return Err(Error::InvalidParameter { name: "problems", reason: "empty problem set".into() });
    }
    if solvers.is_empty() {
        return Err(Error::InvalidParameter { name: "solvers", reason: "empty solver set".into() });
    }
    let cells: Vec<(&Problem, SolverSpec)> = problems.iter().flat_map(|p| solvers.iter().map(move |s| (p, *s))).collect();
    let work = || cells.par_iter().map(|(p, s)| run_cell(p, *s, cfg)).collect::<Vec<_>>();
    let nested = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidParameter { name: "jobs", reason: e.to_string() })?
            .install(work),
        None => work(),
    };
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub solver: String,
    pub tau: f64,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProfile {
    pub alphas: Vec<f64>,
    pub curves: Vec<ProfileCurve>,
}

impl DataProfile {
    /// `solver,tau,alpha,fraction`, one row per curve point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("solver,tau,alpha,fraction\n");
        for c in &self.curves {
            for (a, f) in self.alphas.iter().zip(&c.fractions) {
                s.push_str(&format!("{},{},{},{}\n", c.solver, c.tau, a, f));
            }
        }
        s
    }
}

/// Budget ratios from 1 to 1000, ten per decade.
pub fn default_alphas() -> Vec<f64> {
    (0..=30).map(|k| (10f64.powf(k as f64 / 10.0) * 100.0).round() / 100.0).collect()
}

/// `d(α) = |{p : t_p / (n_p + 1) ≤ α}| / |P|` per (solver, τ), in order of first appearance.
pub fn data_profile(records: &[RunRecord], alphas: &[f64]) -> Result<DataProfile> {
    if alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter { name: "alphas", reason: "must be strictly increasing".into() });
    }
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: HashMap<(String, u64), Vec<&RunRecord>> = HashMap::new();
    for r in records {
        let key = (r.solver.clone(), r.tau.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut reference: HashMap<u64, BTreeSet<&str>> = HashMap::new();
    let mut curves = Vec::new();
    for key in order {
        let group = &groups[&key];
        let names: BTreeSet<&str> = group.iter().map(|r| r.problem.as_str()).collect();
        if names.len() != group.len() {
            return Err(Error::MismatchedProblemSets(format!("{} lists a problem twice", key.0)));
        }
        match reference.get(&key.1) {
            Some(set) if *set != names => {
                return Err(Error::MismatchedProblemSets(format!("{} at tau {}", key.0, f64::from_bits(key.1))));
            }
            Some(_) => {}
            None => {
                reference.insert(key.1, names);
            }
        }
        let total = group.len() as f64;
        let costs: Vec<f64> = group.iter().filter_map(|r| r.t_pa.map(|t| t as f64 / (r.n as f64 + 1.0))).collect();
        let fractions = alphas.iter().map(|a| costs.iter().filter(|c| *c <= a).count() as f64 / total).collect();
        curves.push(ProfileCurve { solver: key.0, tau: f64::from_bits(key.1), fractions });
    }
    Ok(DataProfile { alphas: alphas.to_vec(), curves })
}
