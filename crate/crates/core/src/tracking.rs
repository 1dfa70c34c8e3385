//! Tracking the estimate over a stream of measurement sets: warm starts
//! between steps, a restart whenever the data jump.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{estimate_wls, metrics, multistart, EstimateResult, EstimationProblem, WlsOptions};
use crate::measurement::{NetworkModel, StateVector};
use crate::noise::{plan_targets, simulate_scada_biased, ErrorChainConfig, MeasurementPlan, MeasurementSet, SensorBias};
use crate::powerflow::{solve_power_flow, PowerFlowOptions};
use crate::sdp::{build_moment_sdp, estimation_pop, extract_candidate, solve_sdp, solve_sdp_warm, SdpOptions, SdpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackMode {
    /// Quasi-Newton corrector from the predicted state.
    #[default]
    WlsWarm,
    /// Moment relaxation warm-started from the previous moments, polished
    /// by a quasi-Newton run from the extracted candidate.
    SdpWarm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerOptions {
    pub mode: TrackMode,
    /// Relative L2 change of the measurement vector that counts as a jump.
    pub change_threshold: f64,
    /// Starts for the cold multistart at step 0 and at change points.
    pub restarts: usize,
    pub seed: u64,
    pub wls: WlsOptions,
    pub order: usize,
    pub delta: f64,
    pub sdp: SdpOptions,
    /// A step whose relative displacement exceeds this multiple of the
    /// relative data change, with no change point, is flagged.
    pub displacement_ratio: f64,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        Self {
            mode: TrackMode::WlsWarm,
            change_threshold: 0.2,
            restarts: 8,
            seed: 0,
            wls: WlsOptions::default(),
            order: 2,
            delta: 1e-6,
            sdp: SdpOptions::default(),
            displacement_ratio: 50.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrackerState {
    pub prev_solution: Option<StateVector>,
    /// The solution before `prev_solution`, for the secant predictor.
    pub older_solution: Option<StateVector>,
    /// Previous primal SDP point (moments without y_0), SDP mode only.
    pub prev_moments: Option<Vec<f64>>,
    pub prev_digest: Vec<f64>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub cost: f64,
    /// d₂ to the previous step's estimate; none at step 0.
    pub d2_prev: Option<f64>,
    pub iters: usize,
    pub warm: bool,
    pub change_point: bool,
    /// Large displacement with no data jump: possibly a point where the
    /// solution set is not single-valued.
    pub possible_multivalued: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub steps: Vec<StepRecord>,
    #[serde(skip)]
    pub states: Vec<StateVector>,
}

impl TrajectoryReport {
    pub fn change_points(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.change_point).map(|s| s.step).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,cost,d2_prev,iters,warm,change_point\n");
        for s in &self.steps {
            let d2 = s.d2_prev.map(|d| format!("{d:e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{},{},{},{}", s.step, s.cost, d2, s.iters, s.warm, s.change_point);
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative L2 change ‖new − prev‖ / ‖prev‖. Vectors of different length
/// (a changed measurement layout) always count as a change.
pub fn relative_change(prev: &[f64], new: &[f64]) -> f64 {
    if prev.len() != new.len() {
        return f64::INFINITY;
    }
    let diff: Vec<f64> = prev.iter().zip(new).map(|(a, b)| b - a).collect();
    let d = norm(&diff);
    if d == 0.0 {
        return 0.0;
    }
    d / norm(prev).max(f64::MIN_POSITIVE)
}

pub fn detect_change(prev: &[f64], new: &[f64], threshold: f64) -> bool {
    relative_change(prev, new) > threshold
}

/// First-order secant extrapolation, or the previous state alone.
fn predict(ts: &TrackerState) -> Option<StateVector> {
    let prev = ts.prev_solution.as_ref()?;
    Some(match &ts.older_solution {
        Some(older) => StateVector::new(prev.v.iter().zip(&older.v).map(|(p, o)| 2.0 * p - o).collect()),
        None => prev.clone(),
    })
}

fn sdp_estimate(prob: &EstimationProblem, warm_from: Option<&[f64]>, opts: &TrackerOptions) -> Result<(EstimateResult, Vec<f64>)> {
    let pop = estimation_pop(prob)?;
    let sdp = build_moment_sdp(&pop.pop, opts.order, opts.delta)?;
    let sol = match warm_from.filter(|x| x.len() == sdp.n_vars()) {
        Some(x0) => solve_sdp_warm(&sdp, x0, &opts.sdp)?,
        None => solve_sdp(&sdp, &opts.sdp)?,
    };
    if matches!(sol.status, SdpStatus::Failed | SdpStatus::Infeasible) {
        return Err(Error::Numerical(format!("moment relaxation ended with status {:?}", sol.status)));
    }
    let y = sdp.moments_from_x(&sol.x)?;
    let start = extract_candidate(&pop, &y).unwrap_or_else(|| StateVector::flat(prob.n_buses()));
    let mut est = estimate_wls(prob, &start, &opts.wls)?;
    est.iterations = sol.iterations;
    Ok((est, sol.x))
}

/// One tracking step. Without a change point the previous solution (or
/// its secant extrapolation) seeds the corrector; otherwise a cold
/// multistart runs.
pub fn step(ts: &TrackerState, prob: &EstimationProblem, opts: &TrackerOptions) -> Result<(EstimateResult, TrackerState, StepRecord)> {
    let digest = prob.ms.digest();
    let first = ts.prev_solution.is_none();
    let rel = relative_change(&ts.prev_digest, &digest);
    let change_point = !first && rel > opts.change_threshold;
    let warm = !first && !change_point;

    let (est, moments) = match opts.mode {
        TrackMode::WlsWarm => {
            let est = match predict(ts).filter(|_| warm) {
                Some(pred) if pred.len() == prob.n_buses() => estimate_wls(prob, &pred, &opts.wls)?,
                _ => multistart(prob, opts.restarts, opts.seed, &opts.wls)?,
            };
            (est, None)
        }
        TrackMode::SdpWarm => {
            let from = if warm { ts.prev_moments.as_deref() } else { None };
            let (est, x) = sdp_estimate(prob, from, opts)?;
            (est, Some(x))
        }
    };

    let (d2_prev, possible_multivalued) = match &ts.prev_solution {
        Some(prev) if prev.len() == est.state.len() => {
            let d2 = metrics(&est.state, prev)?.d2;
            let scale = prev.v.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let moved = d2.sqrt() / scale;
            (Some(d2), !change_point && moved > 1e-6 && moved > opts.displacement_ratio * rel)
        }
        _ => (None, false),
    };
    if possible_multivalued {
        log::warn!("step {}: displacement {:.3e} without a data jump", ts.step_index, d2_prev.unwrap_or(0.0));
    }
    let record = StepRecord {
        step: ts.step_index,
        cost: est.cost,
        d2_prev,
        iters: est.iterations,
        warm,
        change_point,
        possible_multivalued,
    };
    let next = TrackerState {
        prev_solution: Some(est.state.clone()),
        older_solution: if warm { ts.prev_solution.clone() } else { None },
        prev_moments: moments,
        prev_digest: digest,
        step_index: ts.step_index + 1,
    };
    Ok((est, next, record))
}

/// Folds [`step`] over the stream. Errors carry the step index.
pub fn run_trajectory(stream: &[MeasurementSet], model: Arc<NetworkModel>, opts: &TrackerOptions) -> Result<TrajectoryReport> {
    if stream.is_empty() {
        return Err(Error::InvalidArgument("empty measurement stream".into()));
    }
    let mut ts = TrackerState::default();
    let mut report = TrajectoryReport::default();
    for (k, ms) in stream.iter().enumerate() {
        let wrap = |e: Error| Error::Step { step: k, source: Box::new(e) };
        let prob = EstimationProblem::new(model.clone(), ms.clone()).map_err(wrap)?;
        let (est, next, record) = step(&ts, &prob, opts).map_err(wrap)?;
        report.steps.push(record);
        report.states.push(est.state);
        ts = next;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamOptions {
    pub steps: usize,
    /// Relative load change per step; the sign is drawn at random.
    pub load_step: f64,
    /// Step at which all loads jump by `jump_factor`.
    pub jump_at: Option<usize>,
    pub jump_factor: f64,
    pub plan: MeasurementPlan,
    pub seed: u64,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self { steps: 20, load_step: 0.01, jump_at: None, jump_factor: 1.6, plan: MeasurementPlan::Scada, seed: 0 }
    }
}

/// A synthetic stream: loads (and non-reference generation) follow a
/// ±`load_step` random walk, each step's true state comes from a power
/// flow, and measurements go through the SCADA chain with sensor biases
/// held fixed over the stream.
pub fn load_stream(model: &NetworkModel, cfg: &ErrorChainConfig, opts: &StreamOptions) -> Result<Vec<(StateVector, MeasurementSet)>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let targets = plan_targets(model, opts.plan);
    let bias = SensorBias::draw(model, cfg, opts.seed);
    let base = model.net.clone();
    let reference = base.reference();
    let mut state = base.case_state();
    let mut lambda = 1.0;
    let mut out = Vec::with_capacity(opts.steps);
    for k in 0..opts.steps {
        if k > 0 {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            lambda *= 1.0 + sign * opts.load_step;
        }
        if opts.jump_at == Some(k) {
            lambda *= opts.jump_factor;
        }
        let mut net = base.clone();
        for b in &mut net.buses {
            b.load *= lambda;
        }
        for g in net.generators.iter_mut().filter(|g| g.bus != reference) {
            g.power *= lambda;
        }
        state = solve_power_flow(&net, &state, &PowerFlowOptions::default())
            .map_err(|e| Error::Step { step: k, source: Box::new(e) })?
            .state;
        let ms = simulate_scada_biased(model, &state, &targets, cfg, &bias, opts.seed.wrapping_add(k as u64))?;
        out.push((state.clone(), ms));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn change_detection() {
        let a = vec![1.0, -2.0, 0.5];
        assert!(!detect_change(&a, &a, 0.2));
        let twice: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        assert!((relative_change(&a, &twice) - 1.0).abs() < 1e-15);
        assert!(detect_change(&a, &twice, 0.2));
        let nudged: Vec<f64> = a.iter().map(|x| x * 1.01).collect();
        assert!(!detect_change(&a, &nudged, 0.2));
        assert!(detect_change(&a, &a[..2], 0.2));
    }

    #[test]
    fn csv_layout() {
        let report = TrajectoryReport {
            steps: vec![StepRecord { step: 0, cost: 0.5, d2_prev: None, iters: 3, warm: false, change_point: false, possible_multivalued: false }],
            states: vec![],
        };
        assert_eq!(report.to_csv(), "step,cost,d2_prev,iters,warm,change_point\n0,5e-1,,3,false,false\n");
    }
}
