use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridstate::bench::{self, EstimatorKind, ExperimentConfig, NoiseProfile};
use gridstate::noise::{parse_jsonl, write_jsonl, ErrorChainConfig, MeasurementPlan};
use gridstate::sdp::{self, SdpOptions, SdpStatus};
use gridstate::tracking::{self, load_stream, StreamOptions, TrackMode, TrackerOptions};
use gridstate::{metrics, Error, EstimationProblem, NetworkModel};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gridstate", version, about = "Steady-state estimation for transmission networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate measurements and estimate the state; prints one JSON record.
    Estimate(EstimateArgs),
    /// Write simulated measurements as JSON lines (or a stream directory).
    Simulate(SimulateArgs),
    /// Mean and std of d2 per estimator over seeds, as CSV.
    Benchmark(BenchArgs),
    /// Build, export and solve the moment relaxation.
    Relax(RelaxArgs),
    /// Track the estimate over a directory of step_<k>.jsonl files.
    Track(TrackArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Plan {
    Scada,
    Mixed,
}

impl From<Plan> for MeasurementPlan {
    fn from(p: Plan) -> Self {
        match p {
            Plan::Scada => MeasurementPlan::Scada,
            Plan::Mixed => MeasurementPlan::Mixed,
        }
    }
}

#[derive(Args, Clone)]
struct CaseArgs {
    /// Bundled case name (case2, case14, case30, case39, case57) or a path.
    #[arg(long, default_value = "case14")]
    case: String,
    /// none, gaussian, faulty or chain.
    #[arg(long, default_value = "none")]
    noise: String,
    /// Fault probability for the faulty profile.
    #[arg(long)]
    pf: Option<f64>,
    #[arg(long, value_enum, default_value = "scada")]
    plan: Plan,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CaseArgs {
    fn noise(&self) -> Result<NoiseProfile, Error> {
        if let Some(p) = self.pf {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("--pf {p} not in [0, 1]")));
            }
            if self.noise != "faulty" {
                return Err(Error::InvalidArgument("--pf needs --noise faulty".into()));
            }
        }
        NoiseProfile::parse(&self.noise, self.pf)
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// wls, multistart[:k], robust[:factor], lasso:r, sdp[:order[:delta]].
    #[arg(long, default_value = "wls")]
    estimator: String,
    /// Budget factor for the robust estimator (d = factor·L).
    #[arg(long)]
    d_factor: Option<f64>,
    /// Read measurements from this JSON-lines file instead of simulating.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Seconds per robust search (results then depend on machine speed).
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Write a load-following stream of this many steps into the directory
    /// given by --out, one step_<k>.jsonl per step.
    #[arg(long)]
    stream_steps: Option<usize>,
    /// Relative load change per stream step.
    #[arg(long, default_value_t = 0.01)]
    load_step: f64,
    /// Stream step at which loads jump by 60%.
    #[arg(long)]
    jump_at: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Estimators to compare; repeat the flag.
    #[arg(long = "estimator", default_values_t = ["wls".to_string(), "robust".to_string()])]
    estimators: Vec<String>,
    #[arg(long)]
    d_factor: Option<f64>,
    /// Seeds to run (comma separated); overrides --seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Number of seeds starting at --seed, when --seeds is absent.
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long)]
    time_limit: Option<f64>,
    /// Also write the per-seed records (JSON lines) here.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Add runtime columns (not reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RelaxArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long)]
    measurements: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long)]
    export_sdpa: Option<PathBuf>,
    /// Solve an SDPA file instead of building a relaxation.
    #[arg(long, conflicts_with = "measurements")]
    import_sdpa: Option<PathBuf>,
    /// Build (and export) only.
    #[arg(long)]
    no_solve: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Wls,
    Sdp,
}

#[derive(Args)]
struct TrackArgs {
    /// Directory of step_<k>.jsonl files.
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value = "case14")]
    case: String,
    #[arg(long, value_enum, default_value = "wls")]
    mode: Mode,
    #[arg(long, default_value_t = 0.2)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit status 2: the inputs are wrong. Exit status 1: a solver failed.
enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let solver = match &e {
            Error::Step { source, .. } => matches!(**source, Error::NonFinite { .. } | Error::AllStartsFailed(_) | Error::Numerical(_)),
            Error::NonFinite { .. } | Error::AllStartsFailed(_) | Error::Numerical(_) => true,
            _ => false,
        };
        if solver {
            Failure::Solver(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn estimator(name: &str, d_factor: Option<f64>) -> Result<EstimatorKind, Failure> {
    let kind: EstimatorKind = name.parse()?;
    Ok(match (kind, d_factor) {
        (EstimatorKind::Robust { .. }, Some(f)) => EstimatorKind::Robust { d_factor: Some(f) },
        (_, Some(_)) if !matches!(kind, EstimatorKind::Robust { .. }) => {
            return Err(Failure::Config("--d-factor applies to the robust estimator only".into()))
        }
        _ => kind,
    })
}

fn problem(case: &CaseArgs, measurements: Option<&Path>) -> Result<(EstimationProblem, gridstate::StateVector), Failure> {
    let net = bench::load_case(&case.case)?;
    let truth = net.case_state();
    let model = Arc::new(NetworkModel::new(net));
    let ms = match measurements {
        Some(p) => parse_jsonl(&read(p)?)?,
        None => bench::simulate(&model, &truth, case.plan.into(), case.noise()?, case.seed)?,
    };
    Ok((EstimationProblem::new(model, ms)?, truth))
}

fn cmd_estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let kind = estimator(&a.estimator, a.d_factor)?;
    let cfg = ExperimentConfig {
        case: a.case.case.clone(),
        noise: a.case.noise()?,
        plan: a.case.plan.into(),
        estimator: kind,
        seeds: vec![a.case.seed],
        time_limit: a.time_limit,
        ..Default::default()
    };
    let (prob, truth) = problem(&a.case, a.measurements.as_deref())?;
    let start = Instant::now();
    let est = bench::run_estimator(&prob, kind, &cfg, a.case.seed)?;
    eprintln!("runtime {:.3} s", start.elapsed().as_secs_f64());
    let m = metrics(&est.state, &truth)?;
    let state: Vec<[f64; 2]> = est.state.v.iter().map(|v| [v.re, v.im]).collect();
    let mut rec = json!({
        "case": a.case.case,
        "estimator": kind.to_string(),
        "seed": a.case.seed,
        "cost": est.cost,
        "d2": m.d2,
        "dinf": m.dinf,
        "iterations": est.iterations,
        "state": state,
    });
    if let Some(d) = est.budget {
        rec["budget"] = json!(d);
    }
    if let Some(b) = est.bound {
        rec["bound"] = json!(b);
    }
    emit(a.out.as_deref(), &format!("{rec}\n"))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let Some(steps) = a.stream_steps else {
        let (prob, _) = problem(&a.case, None)?;
        return emit(a.out.as_deref(), &write_jsonl(&prob.ms));
    };
    let dir = a.out.as_deref().ok_or_else(|| Failure::Config("--stream-steps needs --out <dir>".into()))?;
    if steps == 0 {
        return Err(Failure::Config("--stream-steps must be positive".into()));
    }
    let net = bench::load_case(&a.case.case)?;
    let model = NetworkModel::new(net);
    let cfg = if a.case.noise == "none" { ErrorChainConfig::zero() } else { ErrorChainConfig::default() };
    let opts = StreamOptions { steps, load_step: a.load_step, jump_at: a.jump_at, plan: a.case.plan.into(), seed: a.case.seed, ..Default::default() };
    let stream = load_stream(&model, &cfg, &opts)?;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (k, (_, ms)) in stream.iter().enumerate() {
        let p = dir.join(format!("step_{k}.jsonl"));
        std::fs::write(&p, write_jsonl(ms)).map_err(|e| io_err(&p, e))?;
    }
    Ok(())
}

fn cmd_benchmark(a: &BenchArgs) -> Result<(), Failure> {
    let seeds: Vec<u64> = if a.seeds.is_empty() { (0..a.runs as u64).map(|i| a.case.seed + i).collect() } else { a.seeds.clone() };
    let kinds = a.estimators.iter().map(|e| estimator(e, a.d_factor.filter(|_| e.starts_with("robust")))).collect::<Result<Vec<_>, _>>()?;
    let cfg = ExperimentConfig {
        case: a.case.case.clone(),
        noise: a.case.noise()?,
        plan: a.case.plan.into(),
        estimator: kinds[0],
        seeds,
        time_limit: a.time_limit,
        ..Default::default()
    };
    let start = Instant::now();
    let report = bench::benchmark(&cfg, &kinds)?;
    for o in &report.outcomes {
        if let Err(e) = &o.result {
            eprintln!("{} seed {}: {e}", o.estimator, o.seed);
        }
    }
    for r in &report.summary {
        eprintln!("{}: runtime mean {:.3} s, std {:.3} s", r.estimator, r.runtime_mean, r.runtime_std);
    }
    eprintln!("total {:.3} s", start.elapsed().as_secs_f64());
    if let Some(p) = &a.raw {
        std::fs::write(p, report.raw_jsonl()).map_err(|e| io_err(p, e))?;
    }
    emit(a.out.as_deref(), &report.summary_csv(a.timing))
}

fn cmd_relax(a: &RelaxArgs) -> Result<(), Failure> {
    let (problem_sdp, pop, prob) = match &a.import_sdpa {
        Some(p) => (sdp::parse_sdpa(&read(p)?)?, None, None),
        None => {
            let (prob, _) = problem(&a.case, a.measurements.as_deref())?;
            let pop = sdp::estimation_pop(&prob)?;
            let s = sdp::build_moment_sdp(&pop.pop, a.order, a.delta)?;
            (s, Some(pop), Some(prob))
        }
    };
    if let Some(p) = &a.export_sdpa {
        std::fs::write(p, sdp::export_sdpa(&problem_sdp)).map_err(|e| io_err(p, e))?;
    }
    let mut rec = json!({
        "vars": problem_sdp.n_vars(),
        "blocks": problem_sdp.block_sizes,
    });
    if a.no_solve {
        return emit(a.out.as_deref(), &format!("{rec}\n"));
    }
    let start = Instant::now();
    let sol = sdp::solve_sdp(&problem_sdp, &SdpOptions::default())?;
    eprintln!("runtime {:.3} s", start.elapsed().as_secs_f64());
    rec["status"] = json!(sol.status);
    rec["bound"] = json!(sol.bound);
    rec["primal_objective"] = json!(sol.primal_objective);
    rec["dual_objective"] = json!(sol.dual_objective);
    rec["iterations"] = json!(sol.iterations);
    if let (Some(pop), Some(prob)) = (&pop, &prob) {
        let y = problem_sdp.moments_from_x(&sol.x)?;
        let cand = sdp::extract_candidate(pop, &y);
        rec["candidate"] = match &cand {
            Some(v) => json!(v.v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>()),
            None => serde_json::Value::Null,
        };
        if let Some(v) = &cand {
            rec["candidate_cost"] = json!(gridstate::objective_cost(v, prob));
        }
    }
    emit(a.out.as_deref(), &format!("{rec}\n"))?;
    if matches!(sol.status, SdpStatus::Failed | SdpStatus::Infeasible) {
        return Err(Failure::Solver(format!("SDP solver ended with status {:?}", sol.status)));
    }
    Ok(())
}

fn cmd_track(a: &TrackArgs) -> Result<(), Failure> {
    let net = bench::load_case(&a.case)?;
    let model = Arc::new(NetworkModel::new(net));
    let entries = std::fs::read_dir(&a.stream).map_err(|e| io_err(&a.stream, e))?;
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(&a.stream, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(k) = name.strip_prefix("step_").and_then(|s| s.strip_suffix(".jsonl")) {
            let k: usize = k.parse().map_err(|_| Failure::Config(format!("bad step file name `{name}`")))?;
            files.push((k, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Failure::Config(format!("no step_<k>.jsonl files in {}", a.stream.display())));
    }
    if files.iter().enumerate().any(|(i, (k, _))| i != *k) {
        return Err(Failure::Config("step files must be numbered 0, 1, 2, ... without gaps".into()));
    }
    let stream = files.iter().map(|(_, p)| Ok(parse_jsonl(&read(p)?)?)).collect::<Result<Vec<_>, Failure>>()?;
    let opts = TrackerOptions {
        mode: match a.mode {
            Mode::Wls => TrackMode::WlsWarm,
            Mode::Sdp => TrackMode::SdpWarm,
        },
        change_threshold: a.threshold,
        seed: a.seed,
        order: a.order,
        delta: a.delta,
        ..Default::default()
    };
    let start = Instant::now();
    let report = tracking::run_trajectory(&stream, model, &opts)?;
    eprintln!("runtime {:.3} s", start.elapsed().as_secs_f64());
    emit(a.out.as_deref(), &report.to_csv())
}

fn threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("GRIDSTATE_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| Failure::Config(format!("GRIDSTATE_THREADS={v} is not a count")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads().and_then(|_| match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Relax(a) => cmd_relax(a),
        Command::Track(a) => cmd_track(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
