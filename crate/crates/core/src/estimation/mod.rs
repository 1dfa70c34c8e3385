//! The weighted least-squares objective, its gradient in the 2n−1 real
//! coordinates left after gauge fixing, and the quasi-Newton estimator.

pub mod lbfgs;

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{Form, MeasurementKind, NetworkModel, StateVector};
use crate::noise::MeasurementSet;
pub use lbfgs::{LbfgsOptions, Termination};

/// The C constants of the objective, one per measurement class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub v_pmu: f64,
    pub i_pmu: f64,
    pub i_tf_pmu: f64,
    pub pq_scada: f64,
    pub v_scada: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { v_pmu: 1.0, i_pmu: 1.0, i_tf_pmu: 1.0, pq_scada: 1.0, v_scada: 1.0 }
    }
}

impl Weights {
    pub fn for_kind(&self, kind: MeasurementKind) -> f64 {
        use MeasurementKind::*;
        match kind {
            VPhasor => self.v_pmu,
            IInj => self.i_pmu,
            IFrom | ITo => self.i_tf_pmu,
            VMag => self.v_scada,
            PInj | QInj | PFrom | QFrom | PTo | QTo => self.pq_scada,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            v_pmu: self.v_pmu * alpha,
            i_pmu: self.i_pmu * alpha,
            i_tf_pmu: self.i_tf_pmu * alpha,
            pq_scada: self.pq_scada * alpha,
            v_scada: self.v_scada * alpha,
        }
    }
}

/// Half-width of the band around the |·| kink where the subgradient is 0.
pub const KINK_TOL: f64 = 1e-12;

/// How the SCADA voltage-magnitude residual |v_k|² − (|v_k|^SCADA)² enters
/// the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoltageTerm {
    /// Absolute value of the residual; subgradient 0 at the kink.
    Absolute,
    /// Squared residual, the same least-squares form as every other term.
    /// With unit weights the cost is then the sum of squared residuals.
    #[default]
    Squared,
}

#[derive(Debug, Clone)]
pub struct EstimationProblem {
    pub model: Arc<NetworkModel>,
    pub ms: MeasurementSet,
    pub weights: Weights,
    /// Multiplier per entry: the β/γ selection variables (1 = selected).
    pub selection: Vec<f64>,
    pub voltage_term: VoltageTerm,
}

impl EstimationProblem {
    pub fn new(model: Arc<NetworkModel>, ms: MeasurementSet) -> Result<Self> {
        ms.validate(&model)?;
        let selection = vec![1.0; ms.len()];
        Ok(Self { model, ms, weights: Weights::default(), selection, voltage_term: VoltageTerm::default() })
    }

    pub fn with_weights(mut self, w: Weights) -> Self {
        self.weights = w;
        self
    }

    pub fn with_voltage_term(mut self, t: VoltageTerm) -> Self {
        self.voltage_term = t;
        self
    }

    pub fn with_selection(&self, selection: Vec<f64>) -> Result<Self> {
        if selection.len() != self.ms.len() {
            return Err(Error::DimensionMismatch { expected: self.ms.len(), got: selection.len() });
        }
        Ok(Self { selection, ..self.clone() })
    }

    pub fn n_buses(&self) -> usize {
        self.model.n_buses()
    }

    pub fn reference(&self) -> usize {
        self.model.reference()
    }

    fn form(&self, j: usize) -> Form<'_> {
        let m = &self.ms.entries[j];
        self.model.form(m.kind, m.target, j).expect("validated at construction")
    }

    /// Term j without its selection multiplier: C·weight·residual penalty.
    fn term(&self, j: usize, v: &[Complex64]) -> f64 {
        let m = &self.ms.entries[j];
        let c = self.weights.for_kind(m.kind) * m.weight;
        match self.form(j) {
            Form::Linear(a) => c * (a.eval(v) - m.value).norm_sqr(),
            Form::Quadratic(q) => {
                let h = q.eval(v);
                if m.kind == MeasurementKind::VMag {
                    let r = h - m.value.re * m.value.re;
                    match self.voltage_term {
                        VoltageTerm::Absolute => c * r.abs(),
                        VoltageTerm::Squared => c * r * r,
                    }
                } else {
                    c * (h - m.value.re).powi(2)
                }
            }
        }
    }

    /// Per-entry penalties t_j at `v`, ignoring the selection.
    pub fn term_values(&self, v: &StateVector) -> Vec<f64> {
        (0..self.ms.len()).map(|j| self.term(j, &v.v)).collect()
    }

    /// Objective value and the complex accumulator whose real and imaginary
    /// parts are the derivatives with respect to Re v and Im v.
    fn value_and_acc(&self, v: &[Complex64], acc: &mut [Complex64]) -> f64 {
        acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        let mut f = 0.0;
        for (j, m) in self.ms.entries.iter().enumerate() {
            let s = self.selection[j];
            if s == 0.0 {
                continue;
            }
            let c = self.weights.for_kind(m.kind) * m.weight * s;
            match self.form(j) {
                Form::Linear(a) => {
                    let r = a.eval(v) - m.value;
                    f += c * r.norm_sqr();
                    for &(k, ak) in &a.entries {
                        acc[k] += r * ak.conj() * (2.0 * c);
                    }
                }
                Form::Quadratic(q) => {
                    let h = q.eval(v);
                    let (val, scale) = if m.kind == MeasurementKind::VMag {
                        let r = h - m.value.re * m.value.re;
                        match self.voltage_term {
                            VoltageTerm::Absolute => {
                                // Residuals at rounding level count as the kink.
                                let kink = KINK_TOL * h.abs().max(1.0);
                                let sign = if r > kink { 1.0 } else if r < -kink { -1.0 } else { 0.0 };
                                (c * r.abs(), 2.0 * c * sign)
                            }
                            VoltageTerm::Squared => (c * r * r, 4.0 * c * r),
                        }
                    } else {
                        let r = h - m.value.re;
                        (c * r * r, 4.0 * c * r)
                    };
                    f += val;
                    if scale != 0.0 {
                        q.add_mv(v, scale, acc);
                    }
                }
            }
        }
        f
    }

    fn acc_to_coords(&self, acc: &[Complex64], grad: &mut [f64]) {
        let n = acc.len();
        let r = self.reference();
        let mut j = 0;
        for (k, a) in acc.iter().enumerate() {
            if k != r {
                grad[j] = a.re;
                grad[n - 1 + j] = a.im;
                j += 1;
            }
        }
        grad[2 * n - 2] = acc[r].re;
    }

    /// Objective and gradient at real coordinates `x`.
    pub fn cost_grad_coords(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n_buses();
        let v = StateVector::from_coords(x, n, self.reference());
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let f = self.value_and_acc(&v.v, &mut acc);
        self.acc_to_coords(&acc, grad);
        f
    }
}

/// The objective at `v` under the problem's selection.
pub fn objective_cost(v: &StateVector, prob: &EstimationProblem) -> f64 {
    let mut acc = vec![Complex64::new(0.0, 0.0); v.len()];
    prob.value_and_acc(&v.v, &mut acc)
}

/// Gradient with respect to (Re v_k, k≠ref; Im v_k, k≠ref; Re v_ref). The
/// state is used as given; its reference angle is not re-gauged.
pub fn objective_gradient(v: &StateVector, prob: &EstimationProblem) -> Vec<f64> {
    let n = v.len();
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    prob.value_and_acc(&v.v, &mut acc);
    let mut grad = vec![0.0; 2 * n - 1];
    prob.acc_to_coords(&acc, &mut grad);
    grad
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub state: StateVector,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Seconds; excluded from anything that must be reproducible.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsOptions {
    pub lbfgs: LbfgsOptions,
}

impl Default for WlsOptions {
    fn default() -> Self {
        Self { lbfgs: LbfgsOptions::default() }
    }
}

/// Quasi-Newton descent from `init` (gauge-fixed first).
pub fn estimate_wls(prob: &EstimationProblem, init: &StateVector, opts: &WlsOptions) -> Result<EstimateResult> {
    let n = prob.n_buses();
    if init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: init.len() });
    }
    let start = Instant::now();
    let r = prob.reference();
    let x0 = init.gauge_fixed(r).to_coords(r);
    let out = lbfgs::minimize(|x, g| prob.cost_grad_coords(x, g), &x0, &opts.lbfgs).map_err(|e| {
        Error::NonFinite { iteration: e.iteration, last: Box::new(StateVector::from_coords(&e.x, n, r)) }
    })?;
    let mut state = StateVector::from_coords(&out.x, n, r);
    if state.v[r].re < 0.0 && prob.ms.l_pmu() == 0 {
        // v and −v give identical power measurements.
        state = state.gauge_fixed(r);
    }
    let cost = objective_cost(&state, prob);
    Ok(EstimateResult {
        state,
        cost,
        iterations: out.iterations,
        converged: matches!(out.termination, Termination::Gradient | Termination::RelativeDecrease),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Start `i` of the multistart sequence for `seed`: index 0 is the flat
/// start, later ones have magnitudes in [0.8, 1.2] and angles in [−30°, 30°].
/// The sequence is a prefix stream, so k starts are the first k of k' > k.
pub fn multistart_inits(n: usize, reference: usize, k: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        if i == 0 {
            out.push(StateVector::flat(n));
            continue;
        }
        let v = (0..n)
            .map(|b| {
                let mag = rng.gen_range(0.8..=1.2);
                let ang: f64 = rng.gen_range(-30.0f64..=30.0).to_radians();
                if b == reference {
                    Complex64::new(mag, 0.0)
                } else {
                    Complex64::from_polar(mag, ang)
                }
            })
            .collect();
        out.push(StateVector::new(v));
    }
    out
}

/// Best of the given starts; ties go to the earliest start.
pub fn best_of(prob: &EstimationProblem, inits: &[StateVector], opts: &WlsOptions) -> Result<EstimateResult> {
    let start = Instant::now();
    let runs: Vec<Result<EstimateResult>> = inits.par_iter().map(|v0| estimate_wls(prob, v0, opts)).collect();
    let mut best: Option<EstimateResult> = None;
    for run in runs.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let mut best = best.ok_or(Error::AllStartsFailed(inits.len()))?;
    best.wall_time = start.elapsed().as_secs_f64();
    Ok(best)
}

/// Best of `k` quasi-Newton runs from [`multistart_inits`].
pub fn multistart(prob: &EstimationProblem, k: usize, seed: u64, opts: &WlsOptions) -> Result<EstimateResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("multistart needs k >= 1".into()));
    }
    best_of(prob, &multistart_inits(prob.n_buses(), prob.reference(), k, seed), opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Squared 2-norm distance Σ|v_i − v̂_i|².
    pub d2: f64,
    /// max_i |v_i − v̂_i|.
    pub dinf: f64,
}

pub fn metrics(est: &StateVector, truth: &StateVector) -> Result<Metrics> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: est.len() });
    }
    let diffs = est.v.iter().zip(&truth.v).map(|(a, b)| (a - b).norm());
    let (d2, dinf) = diffs.fold((0.0, 0.0f64), |(s, m), d| (s + d * d, m.max(d)));
    Ok(Metrics { d2, dinf })
}
