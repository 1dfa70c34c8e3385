//! Experiment pipelines: load a case, simulate measurements, estimate,
//! score against the true state. The CLI is a thin layer over this.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::cases;
use crate::error::{Error, Result};
use crate::estimation::{estimate_wls, metrics, multistart, EstimationProblem, WlsOptions};
use crate::measurement::{MeasurementKind, NetworkModel, StateVector};
use crate::network::{parse_case, Network};
use crate::noise::{gaussian_noise, inject_faults, plan_targets, simulate_scada, ErrorChainConfig, MeasurementPlan, MeasurementSet};
use crate::robust::{solve_lasso, solve_robust, BudgetMode, Grouping, RobustOptions};
use crate::sdp::{build_moment_sdp, estimation_pop, extract_candidate, solve_sdp, SdpOptions, SdpStatus};

/// Largest case the robust estimator accepts.
pub const ROBUST_BUS_LIMIT: usize = 57;
/// Above this many selection binaries the robust estimator switches to one
/// binary per bus.
pub const GROUPING_CAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseProfile {
    None,
    /// Gaussian noise of variance 0.1·|m| on every entry.
    Gaussian,
    /// Faults with probability p_f (variance 100·|m|), else as `Gaussian`.
    Faulty { p_f: f64 },
    /// The SCADA instrument chain with default error magnitudes.
    Chain,
}

impl NoiseProfile {
    pub fn parse(name: &str, p_f: Option<f64>) -> Result<Self> {
        Ok(match name {
            "none" => NoiseProfile::None,
            "gaussian" | "gaussian-0.1m" => NoiseProfile::Gaussian,
            "faulty" => NoiseProfile::Faulty { p_f: p_f.unwrap_or(0.1) },
            "chain" => NoiseProfile::Chain,
            _ => return Err(Error::InvalidArgument(format!("unknown noise profile `{name}`"))),
        })
    }

    pub fn fault_probability(&self) -> f64 {
        match self {
            NoiseProfile::Faulty { p_f } => *p_f,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Wls,
    Multistart { k: usize },
    /// Budget d = factor·L; the factor defaults from the fault probability.
    Robust { d_factor: Option<f64> },
    Lasso { r: f64 },
    Sdp { order: usize, delta: f64 },
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Wls => write!(f, "wls"),
            EstimatorKind::Multistart { k } => write!(f, "multistart:{k}"),
            EstimatorKind::Robust { d_factor: None } => write!(f, "robust"),
            EstimatorKind::Robust { d_factor: Some(x) } => write!(f, "robust:{x}"),
            EstimatorKind::Lasso { r } => write!(f, "lasso:{r}"),
            EstimatorKind::Sdp { order, delta } => write!(f, "sdp:{order}:{delta:e}"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    /// `wls`, `multistart[:k]`, `robust[:factor]`, `lasso:r`,
    /// `sdp[:order[:delta]]`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::InvalidArgument(format!("bad estimator `{s}`"));
        let num = |i: usize| -> Result<Option<f64>> { args.get(i).map(|a| a.parse::<f64>().map_err(|_| bad())).transpose() };
        let kind = match (name, args.len()) {
            ("wls", 0) => EstimatorKind::Wls,
            ("multistart", 0 | 1) => {
                let k = args.first().map(|a| a.parse::<usize>().map_err(|_| bad())).transpose()?.unwrap_or(16);
                EstimatorKind::Multistart { k }
            }
            ("robust", 0 | 1) => EstimatorKind::Robust { d_factor: num(0)? },
            ("lasso", 1) => EstimatorKind::Lasso { r: num(0)?.ok_or_else(bad)? },
            ("sdp", 0..=2) => {
                let order = args.first().map(|a| a.parse::<usize>().map_err(|_| bad())).transpose()?.unwrap_or(2);
                EstimatorKind::Sdp { order, delta: num(1)?.unwrap_or(1e-6) }
            }
            _ => return Err(bad()),
        };
        Ok(kind)
    }
}

/// The budget factor matching a fault probability: 0.9 for p_f = 0.1 and
/// 0.99 for p_f = 0.01, 1 − p_f otherwise, 1 without faults.
pub fn budget_factor(p_f: f64) -> f64 {
    if (p_f - 0.1).abs() < 1e-12 {
        0.9
    } else if (p_f - 0.01).abs() < 1e-12 {
        0.99
    } else {
        1.0 - p_f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// A bundled case name or a path to a case file.
    pub case: String,
    pub noise: NoiseProfile,
    pub plan: MeasurementPlan,
    pub estimator: EstimatorKind,
    pub seeds: Vec<u64>,
    /// Seconds per robust search; makes results depend on machine speed.
    pub time_limit: Option<f64>,
    /// Starts per least-squares solve inside the robust and SDP paths.
    pub inner_starts: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            case: "case14".into(),
            noise: NoiseProfile::None,
            plan: MeasurementPlan::Scada,
            estimator: EstimatorKind::Wls,
            seeds: vec![0],
            time_limit: None,
            inner_starts: 4,
        }
    }
}

/// A bundled case by name, else the file at that path.
pub fn load_case(case: &str) -> Result<Network> {
    if cases::builtin_text(case).is_some() {
        return cases::builtin(case);
    }
    let text = std::fs::read_to_string(case)
        .map_err(|e| Error::InvalidArgument(format!("cannot read case `{case}`: {e}")))?;
    parse_case(&text)
}

/// Measurements of the plan at the case's stored state under `noise`.
pub fn simulate(model: &NetworkModel, truth: &StateVector, plan: MeasurementPlan, noise: NoiseProfile, seed: u64) -> Result<MeasurementSet> {
    let targets = plan_targets(model, plan);
    let clean = MeasurementSet::exact(model, truth, &targets)?;
    match noise {
        NoiseProfile::None => Ok(clean),
        NoiseProfile::Gaussian => Ok(gaussian_noise(&clean, seed)),
        NoiseProfile::Faulty { p_f } => inject_faults(&clean, p_f, seed),
        NoiseProfile::Chain => {
            let scada: Vec<_> = targets.iter().copied().filter(|t| !t.0.is_pmu()).collect();
            let pmu: Vec<_> = targets.iter().copied().filter(|t| t.0.is_pmu()).collect();
            let cfg = ErrorChainConfig::default();
            let mut ms = simulate_scada(model, truth, &scada, &cfg, seed)?;
            if !pmu.is_empty() {
                ms.entries.extend(crate::noise::simulate_pmu(model, truth, &pmu, &cfg, seed)?.entries);
            }
            Ok(ms)
        }
    }
}

/// The two-bus example: |v₁|, p₂, q₂ and p₁ measured exactly at the solved
/// state (1, 0.806 − 0.19i).
pub fn two_bus_problem() -> (EstimationProblem, StateVector) {
    use MeasurementKind::*;
    let net = cases::two_bus();
    let truth = net.case_state();
    let model = Arc::new(NetworkModel::new(net));
    let ms = MeasurementSet::exact(&model, &truth, &[(VMag, 0), (PInj, 1), (QInj, 1), (PInj, 0)]).expect("two-bus targets exist");
    (EstimationProblem::new(model, ms).expect("exact measurements are valid"), truth)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub case: String,
    pub estimator: String,
    pub seed: u64,
    pub cost: f64,
    pub d2: f64,
    pub dinf: f64,
    pub iterations: usize,
    /// Selected budget, robust runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Relaxation bound, SDP runs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sdp_status: Option<SdpStatus>,
    /// Seconds; never part of reproducible output.
    #[serde(skip)]
    pub runtime: f64,
}

/// Result of running one estimator on one problem.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub state: StateVector,
    pub cost: f64,
    pub iterations: usize,
    pub budget: Option<usize>,
    pub bound: Option<f64>,
    pub sdp_status: Option<SdpStatus>,
}

pub fn run_estimator(prob: &EstimationProblem, kind: EstimatorKind, cfg: &ExperimentConfig, seed: u64) -> Result<Estimate> {
    let wls = WlsOptions::default();
    let plain = |e: crate::EstimateResult| Estimate { state: e.state, cost: e.cost, iterations: e.iterations, budget: None, bound: None, sdp_status: None };
    match kind {
        EstimatorKind::Wls => Ok(plain(estimate_wls(prob, &StateVector::flat(prob.n_buses()), &wls)?)),
        EstimatorKind::Multistart { k } => Ok(plain(multistart(prob, k, seed, &wls)?)),
        EstimatorKind::Robust { d_factor } => {
            let n = prob.n_buses();
            if n > ROBUST_BUS_LIMIT {
                return Err(Error::InvalidArgument(format!("robust estimation is limited to {ROBUST_BUS_LIMIT} buses, case has {n}")));
            }
            let factor = d_factor.unwrap_or_else(|| budget_factor(cfg.noise.fault_probability()));
            if !(factor > 0.0 && factor <= 1.0) {
                return Err(Error::InvalidArgument(format!("budget factor {factor} not in (0, 1]")));
            }
            let d = (factor * prob.ms.real_count() as f64).floor() as usize;
            let grouped = prob.ms.len() > GROUPING_CAP;
            let opts = RobustOptions {
                inner_starts: cfg.inner_starts,
                seed,
                time_limit: cfg.time_limit.map(std::time::Duration::from_secs_f64),
                grouping: if grouped { Grouping::PerBus } else { Grouping::PerEntry },
                budget_mode: if grouped { BudgetMode::AtLeast } else { BudgetMode::Exact },
                ..Default::default()
            };
            let r = solve_robust(prob, d, &opts)?;
            Ok(Estimate { state: r.state, cost: r.cost, iterations: r.nodes_explored, budget: Some(d), bound: None, sdp_status: None })
        }
        EstimatorKind::Lasso { r } => {
            let opts = RobustOptions { inner_starts: cfg.inner_starts, seed, ..Default::default() };
            let out = solve_lasso(prob, r, &opts)?;
            Ok(Estimate { state: out.estimate.state, cost: out.estimate.cost, iterations: out.rounds, budget: None, bound: None, sdp_status: None })
        }
        EstimatorKind::Sdp { order, delta } => {
            let pop = estimation_pop(prob)?;
            let sdp = build_moment_sdp(&pop.pop, order, delta)?;
            let sol = solve_sdp(&sdp, &SdpOptions::default())?;
            if matches!(sol.status, SdpStatus::Failed | SdpStatus::Infeasible) {
                return Err(Error::Numerical(format!("moment relaxation ended with status {:?}", sol.status)));
            }
            let y = sdp.moments_from_x(&sol.x)?;
            let start = extract_candidate(&pop, &y).unwrap_or_else(|| StateVector::flat(prob.n_buses()));
            let e = estimate_wls(prob, &start, &wls)?;
            Ok(Estimate { state: e.state, cost: e.cost, iterations: sol.iterations, budget: None, bound: Some(sol.bound), sdp_status: Some(sol.status) })
        }
    }
}

/// parse → simulate → estimate → metrics for one seed.
pub fn run_once(net: &Network, cfg: &ExperimentConfig, kind: EstimatorKind, seed: u64) -> Result<RunRecord> {
    let truth = net.case_state();
    let model = Arc::new(NetworkModel::new(net.clone()));
    let ms = simulate(&model, &truth, cfg.plan, cfg.noise, seed)?;
    let prob = EstimationProblem::new(model, ms)?;
    let start = Instant::now();
    let est = run_estimator(&prob, kind, cfg, seed)?;
    let runtime = start.elapsed().as_secs_f64();
    let m = metrics(&est.state, &truth)?;
    Ok(RunRecord {
        case: cfg.case.clone(),
        estimator: kind.to_string(),
        seed,
        cost: est.cost,
        d2: m.d2,
        dinf: m.dinf,
        iterations: est.iterations,
        budget: est.budget,
        bound: est.bound,
        sdp_status: est.sdp_status,
        runtime,
    })
}

/// One seed's outcome; failures are kept so the report can show them.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub estimator: EstimatorKind,
    pub seed: u64,
    pub result: std::result::Result<RunRecord, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub estimator: String,
    pub runs: usize,
    pub failures: usize,
    pub d2_mean: f64,
    pub d2_std: f64,
    pub runtime_mean: f64,
    pub runtime_std: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub outcomes: Vec<SeedOutcome>,
    pub summary: Vec<SummaryRow>,
}

/// Sample mean and standard deviation (n − 1 denominator).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every estimator on every seed. Seeds run in parallel; results are
/// assembled in (estimator, seed) order.
pub fn benchmark(cfg: &ExperimentConfig, estimators: &[EstimatorKind]) -> Result<BenchReport> {
    if cfg.seeds.len() < 2 {
        return Err(Error::InvalidArgument("benchmark needs at least 2 seeds (std is undefined for one)".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidArgument("no estimators given".into()));
    }
    let net = load_case(&cfg.case)?;
    let jobs: Vec<(EstimatorKind, u64)> = estimators.iter().flat_map(|&e| cfg.seeds.iter().map(move |&s| (e, s))).collect();
    let outcomes: Vec<SeedOutcome> = jobs
        .par_iter()
        .map(|&(estimator, seed)| SeedOutcome { estimator, seed, result: run_once(&net, cfg, estimator, seed).map_err(|e| e.to_string()) })
        .collect();
    let summary = estimators
        .iter()
        .map(|&e| {
            let ok: Vec<&RunRecord> = outcomes.iter().filter(|o| o.estimator == e).filter_map(|o| o.result.as_ref().ok()).collect();
            let (d2_mean, d2_std) = mean_std(&ok.iter().map(|r| r.d2).collect::<Vec<_>>());
            let (runtime_mean, runtime_std) = mean_std(&ok.iter().map(|r| r.runtime).collect::<Vec<_>>());
            SummaryRow {
                estimator: e.to_string(),
                runs: ok.len(),
                failures: cfg.seeds.len() - ok.len(),
                d2_mean,
                d2_std,
                runtime_mean,
                runtime_std,
            }
        })
        .collect();
    Ok(BenchReport { outcomes, summary })
}

impl BenchReport {
    /// The table: one row per estimator with d₂ mean and std. Runtime
    /// columns only when `timing` is set, since they are not reproducible.
    pub fn summary_csv(&self, timing: bool) -> String {
        let mut out = String::from("estimator,runs,failures,d2_mean,d2_std");
        out.push_str(if timing { ",runtime_mean,runtime_std\n" } else { "\n" });
        for r in &self.summary {
            let _ = write!(out, "{},{},{},{:e},{:e}", r.estimator, r.runs, r.failures, r.d2_mean, r.d2_std);
            if timing {
                let _ = write!(out, ",{:e},{:e}", r.runtime_mean, r.runtime_std);
            }
            out.push('\n');
        }
        out
    }

    /// Per-seed records as JSON lines, failures included, in table order.
    pub fn raw_jsonl(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            let line = match &o.result {
                Ok(r) => serde_json::to_string(r).expect("record serializes"),
                Err(e) => serde_json::json!({ "estimator": o.estimator.to_string(), "seed": o.seed, "error": e }).to_string(),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}
