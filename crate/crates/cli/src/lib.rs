//! Command implementations behind the `warpopt` binary.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use warpopt::adawarp::{adawarp, AdaWarpConfig, InnerSolver, Sigma0, UpruleMode};
use warpopt::bench::{data_profile, default_alphas, run_campaign, CampaignConfig, RunRecord, SolverSpec};
use warpopt::kkt::{epsilon_stationarity, relative_kkt_satisfied, KktReport};
use warpopt::linalg::norm_inf;
use warpopt::merit::{MeritFunction, Objective};
use warpopt::problems::{by_name, quadratic_problem, registry, Problem};
use warpopt::solvers::{
    lbfgs, nonsmooth_qn_ppm, projected_gradient_baseline, LineSearchParams, SolveResult, SolverConfig,
};
use warpopt::warps::{affine_to_box, sigmoid_inverse, BoundBox, SigmoidalWarp};

/// Bad configuration or unknown names; the binary exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Name(String),
    Inline {
        quadratic: QuadraticSpec,
    },
}

/// One experiment, read from a single JSON document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: Option<ProblemRef>,
    /// `adawarp`, `ppm`, `projgrad-baseline` or `fixed-sigma:<σ>`.
    pub solver: String,
    /// Start in box coordinates; the problem's nominal start when absent.
    pub start: Option<Vec<f64>>,
    /// Seed for sampling a random interior start (and gradcheck points).
    pub seed: Option<u64>,
    /// Defaults to 1 for single solves and 1e-3 for campaigns.
    pub sigma0: Option<Sigma0>,
    pub gamma: f64,
    pub kappa: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub tau: Option<f64>,
    pub max_outer_iters: usize,
    pub inner: InnerSolver,
    pub uprule_mode: UpruleMode,
    pub max_evals: Option<u64>,
    pub max_iters: usize,
    pub memory: usize,
    pub line_search: LineSearchParams,
    pub gradcheck_points: usize,
    /// Campaign settings.
    pub problems: Option<Vec<String>>,
    pub solvers: Vec<SolverSpec>,
    pub taus: Vec<f64>,
    pub budget: u64,
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ada = AdaWarpConfig::default();
        let solver = SolverConfig::default();
        let bench = CampaignConfig::default();
        Self {
            problem: None,
            solver: "adawarp".into(),
            start: None,
            seed: None,
            sigma0: None,
            gamma: ada.gamma,
            kappa: ada.kappa,
            delta: ada.delta,
            epsilon: ada.epsilon,
            tau: ada.tau,
            max_outer_iters: ada.max_outer_iters,
            inner: ada.inner,
            uprule_mode: ada.uprule_mode,
            max_evals: ada.max_evals,
            max_iters: solver.max_iters,
            memory: solver.memory,
            line_search: solver.line_search,
            gradcheck_points: 50,
            problems: None,
            solvers: SolverSpec::defaults(),
            taus: bench.taus,
            budget: bench.budget,
            jobs: bench.jobs,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every field present.
    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            delta: self.delta,
            max_iters: self.max_iters,
            max_evals: self.max_evals,
            line_search: self.line_search,
            memory: self.memory,
            fixed_step: None,
        }
    }

    pub fn adawarp_config(&self) -> AdaWarpConfig {
        AdaWarpConfig {
            sigma0: self.sigma0.clone().unwrap_or(Sigma0::Scalar(1.0)),
            gamma: self.gamma,
            kappa: self.kappa,
            delta: self.delta,
            epsilon: self.epsilon,
            tau: self.tau,
            max_outer_iters: self.max_outer_iters,
            inner: self.inner,
            solver: self.solver_config(),
            uprule_mode: self.uprule_mode,
            max_evals: self.max_evals,
        }
    }

    /// Campaign settings; the AdaWarp entry keeps running until the tightest τ is met.
    pub fn campaign_config(&self) -> CampaignConfig {
        let base = CampaignConfig::default();
        let adawarp = AdaWarpConfig {
            sigma0: self.sigma0.clone().unwrap_or(base.adawarp.sigma0.clone()),
            epsilon: base.adawarp.epsilon,
            delta: base.adawarp.delta,
            max_outer_iters: base.adawarp.max_outer_iters,
            max_evals: None,
            ..self.adawarp_config()
        };
        CampaignConfig { taus: self.taus.clone(), budget: self.budget, jobs: self.jobs, adawarp, delta: base.delta }
    }

    /// The configured problem, with the configured or sampled start.
    pub fn resolve_problem(&self) -> Result<Problem> {
        let p = match self.problem.as_ref().ok_or_else(|| config_err("no problem given"))? {
            ProblemRef::Name(name) => by_name(name).map_err(|e| config_err(e.to_string()))?,
            ProblemRef::Inline { quadratic: q } => {
                let bounds = BoundBox::new(q.lower.clone(), q.upper.clone()).map_err(|e| config_err(e.to_string()))?;
                let mid: Vec<f64> = q.lower.iter().zip(&q.upper).map(|(l, u)| 0.5 * (l + u)).collect();
                quadratic_problem("inline_quadratic", q.h.clone(), q.c.clone(), bounds, mid)
                    .map_err(|e| config_err(e.to_string()))?
            }
        };
        let start = match (&self.start, self.seed) {
            (Some(s), _) => Some(s.clone()),
            (None, Some(seed)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let b = p.bounds();
                Some((0..p.dim()).map(|i| b.lower()[i] + (b.upper()[i] - b.lower()[i]) * rng.gen_range(0.01..0.99)).collect())
            }
            (None, None) => None,
        };
        match start {
            Some(s) => Problem::new(p.name.clone(), p.objective.clone(), s, p.known_optimum.clone(), p.tags.clone())
                .map_err(|e| config_err(e.to_string())),
            None => Ok(p),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(&r)?);
        s.push('\n');
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub k: usize,
    pub sigma: Vec<f64>,
    pub y_star: Vec<f64>,
    pub f: f64,
    pub epsilon: f64,
    pub evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub solver: String,
    pub status: String,
    pub tolerance_met: bool,
    pub final_epsilon: f64,
    pub total_evals: u64,
    pub total_grads: u64,
    /// Final point in box coordinates.
    pub solution: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub trace: Vec<TraceLine>,
    pub summary: Summary,
    pub trace_path: PathBuf,
}

impl SolveOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.tolerance_met {
            0
        } else {
            1
        }
    }
}

fn tolerance_met(cfg: &RunConfig, report: &KktReport, grad0: &[f64]) -> bool {
    report.epsilon <= cfg.epsilon
        || cfg.tau.is_some_and(|t| relative_kkt_satisfied(report, grad0, t).unwrap_or(false))
}

/// Single-solve runs: one trace line for the whole solve.
fn single_solve(cfg: &RunConfig, p: &Problem, spec: SolverSpec) -> Result<(TraceLine, SolveResult, KktReport)> {
    let y0 = p.unit_start()?;
    let scfg = cfg.solver_config();
    let (r, sigma) = match spec {
        SolverSpec::FixedSigma(s) => {
            let w = SigmoidalWarp::uniform(p.dim(), s)?;
            let x0 = sigmoid_inverse(&y0, &w)?;
            (lbfgs(&MeritFunction::sigmoidal(p.objective.clone(), w)?, &x0, &scfg)?, vec![s; p.dim()])
        }
        SolverSpec::Ppm => (nonsmooth_qn_ppm(&MeritFunction::projection_penalty(p.objective.clone()), &y0, &scfg)?, vec![]),
        SolverSpec::ProjgradBaseline => (projected_gradient_baseline(&p.objective, &y0, &scfg)?, vec![]),
        SolverSpec::AdaWarp => unreachable!("handled by the outer loop"),
    };
    let g = p.objective.fork().unit_gradient(&r.image)?;
    let report = epsilon_stationarity(&r.image, &g)?;
    let y_star = affine_to_box(&r.image, p.bounds())?;
    let line = TraceLine { k: 0, sigma, y_star, f: r.value, epsilon: report.epsilon, evals: r.evals.evals };
    Ok((line, r, report))
}

/// Solves one problem and writes `trace.jsonl` (one line per outer iteration plus a summary line) into `out`.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<SolveOutcome> {
    let spec: SolverSpec = cfg.solver.parse().map_err(|e: warpopt::Error| config_err(e.to_string()))?;
    let p = cfg.resolve_problem()?;
    let y0 = p.unit_start()?;
    let grad0 = p.objective.fork().unit_gradient(&y0)?;

    let (trace, summary) = if spec == SolverSpec::AdaWarp {
        let ada = cfg.adawarp_config();
        ada.validate().map_err(|e| config_err(e.to_string()))?;
        let t = adawarp(&p.objective, &y0, &ada)?;
        let lines: Vec<TraceLine> = t
            .records
            .iter()
            .map(|r| TraceLine {
                k: r.k,
                sigma: r.sigma.clone(),
                y_star: affine_to_box(&r.y_star, p.bounds()).unwrap_or_else(|_| r.y_star.clone()),
                f: r.f,
                epsilon: r.kkt.epsilon,
                evals: r.evals_so_far.evals,
            })
            .collect();
        let eps = t.final_epsilon().unwrap_or(f64::INFINITY);
        let summary = Summary {
            problem: p.name.clone(),
            solver: cfg.solver.clone(),
            status: serde_json::to_value(t.termination)?.as_str().unwrap_or_default().to_string(),
            tolerance_met: t.converged(),
            final_epsilon: eps,
            total_evals: t.total_evals.evals,
            total_grads: t.total_evals.grads,
            solution: t.solution.clone(),
        };
        (lines, summary)
    } else {
        cfg.solver_config().validate().map_err(|e| config_err(e.to_string()))?;
        let (line, r, report) = single_solve(cfg, &p, spec)?;
        let summary = Summary {
            problem: p.name.clone(),
            solver: cfg.solver.clone(),
            status: serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string(),
            tolerance_met: tolerance_met(cfg, &report, &grad0),
            final_epsilon: report.epsilon,
            total_evals: r.evals.evals,
            total_grads: r.evals.grads,
            solution: affine_to_box(&r.image, p.bounds())?,
        };
        (vec![line], summary)
    };

    let mut body = jsonl(&trace)?;
    body.push_str(&serde_json::to_string(&serde_json::json!({ "summary": &summary }))?);
    body.push('\n');
    let trace_path = out.join("trace.jsonl");
    write_atomic(&trace_path, body.as_bytes())?;
    Ok(SolveOutcome { trace, summary, trace_path })
}

/// Central difference with one Richardson step, `O(h⁴)`.
pub fn richardson_gradient(f: &dyn Fn(&[f64]) -> Option<f64>, x: &[f64], h: &[f64]) -> Option<Vec<f64>> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let mut diff = |step: f64| -> Option<f64> {
            probe[i] = x[i] + step;
            let a = f(&probe)?;
            probe[i] = x[i] - step;
            let b = f(&probe)?;
            probe[i] = x[i];
            Some((a - b) / (2.0 * step))
        };
        let d1 = diff(h[i])?;
        let d2 = diff(0.5 * h[i])?;
        g.push((4.0 * d2 - d1) / 3.0);
    }
    Some(g)
}

/// `‖a − b‖∞ / max(‖b‖∞, 1)`
pub fn relative_error(fd: &[f64], exact: &[f64]) -> f64 {
    let diff: Vec<f64> = fd.iter().zip(exact).map(|(a, b)| a - b).collect();
    norm_inf(&diff) / norm_inf(exact).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub problem: String,
    pub points: usize,
    /// Objective gradient against differences in box coordinates.
    pub objective_error: f64,
    /// Sigmoidal merit (σ = 1) gradient against differences of the merit.
    pub merit_error: f64,
}

impl GradcheckReport {
    pub const THRESHOLD: f64 = 1e-5;

    pub fn max_error(&self) -> f64 {
        self.objective_error.max(self.merit_error)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < Self::THRESHOLD
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Worst-case error of a merit gradient against differences of its values.
pub fn merit_gradient_error(m: &MeritFunction, x: &[f64], h: f64) -> Result<f64> {
    let exact = m.gradient(x)?;
    let steps = vec![h; x.len()];
    let fd = richardson_gradient(&|z| m.value(z).ok(), x, &steps).context("merit undefined near sample")?;
    Ok(relative_error(&fd, &exact))
}

/// Compares analytic gradients with finite differences at `points` random feasible points.
/// Uses fresh counters, so the problem's own counts are untouched.
pub fn cmd_gradcheck(problem: &Problem, points: usize, seed: u64) -> Result<GradcheckReport> {
    let obj: Objective = problem.objective.fork();
    let n = obj.dim();
    let b = obj.bounds().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = SigmoidalWarp::uniform(n, 1.0)?;
    let m = MeritFunction::sigmoidal(obj.clone(), w)?;
    let (mut e_obj, mut e_merit) = (0.0f64, 0.0f64);
    for _ in 0..points {
        // keep both stencils inside the box
        let y: Vec<f64> =
            (0..n).map(|i| b.lower()[i] + (b.upper()[i] - b.lower()[i]) * rng.gen_range(0.01..0.99)).collect();
        let h: Vec<f64> = b.widths().iter().map(|w| 1e-3 * w).collect();
        let exact = obj.gradient(&y)?;
        let fd = richardson_gradient(&|z| obj.value(z).ok(), &y, &h).context("objective undefined near sample")?;
        e_obj = e_obj.max(relative_error(&fd, &exact));

        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        e_merit = e_merit.max(merit_gradient_error(&m, &x, 1e-3)?);
    }
    Ok(GradcheckReport { problem: problem.name.clone(), points, objective_error: e_obj, merit_error: e_merit })
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub records: Vec<RunRecord>,
    pub csv: String,
    pub csv_path: PathBuf,
    pub runs_path: PathBuf,
}

/// Problems named in the config, or the whole registry.
pub fn campaign_problems(cfg: &RunConfig) -> Result<Vec<Problem>> {
    match &cfg.problems {
        None => Ok(registry()),
        Some(names) => names.iter().map(|n| by_name(n).map_err(|e| config_err(e.to_string()))).collect(),
    }
}

/// Runs the campaign and writes `profile.csv` and `runs.jsonl` into `out`.
pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<BenchOutcome> {
    if cfg.solvers.is_empty() {
        return Err(config_err("empty solver list"));
    }
    let problems = campaign_problems(cfg)?;
    let ccfg = cfg.campaign_config();
    ccfg.validate().map_err(|e| config_err(e.to_string()))?;
    let records = run_campaign(&problems, &cfg.solvers, &ccfg)?;
    for r in records.iter().filter(|r| r.error.is_some()) {
        log::warn!("{} on {}: {}", r.solver, r.problem, r.error.as_deref().unwrap_or_default());
    }
    let csv = data_profile(&records, &default_alphas())?.to_csv();
    let csv_path = out.join("profile.csv");
    let runs_path = out.join("runs.jsonl");
    write_atomic(&runs_path, jsonl(&records)?.as_bytes())?;
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok(BenchOutcome { records, csv, csv_path, runs_path })
}

/// Recomputes the data-profile CSV from a `runs.jsonl` file.
pub fn cmd_profile(runs: &Path, out: &Path) -> Result<String> {
    let text = std::fs::read_to_string(runs).with_context(|| format!("reading {}", runs.display()))?;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<RunRecord>(l).map_err(|e| config_err(format!("{}: {e}", runs.display()))))
        .collect::<Result<Vec<_>>>()?;
    let csv = data_profile(&records, &default_alphas())?.to_csv();
    write_atomic(&out.join("profile.csv"), csv.as_bytes())?;
    Ok(csv)
}

/// Exit status for a failed command: 2 for configuration problems, 1 otherwise.
pub fn error_exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<warpopt::Error>() {
        Some(warpopt::Error::UnknownProblem(_) | warpopt::Error::InvalidParameter { .. }) => 2,
        _ => 1,
    }
}
