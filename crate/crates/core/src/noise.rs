//! Measurement sets, the SCADA/PMU error chains, and the fault-injection
//! protocol used in the robust-statistics experiments.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{evaluate_h, MeasurementKind, NetworkModel, StateVector};

/// Smallest |m| used when the noise variance is proportional to |m|.
pub const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub target: usize,
    /// Real for SCADA kinds (imaginary part 0); for `v_mag` this is the
    /// magnitude |v|, not |v|².
    pub value: Complex64,
    /// The C constant of the entry's term.
    pub weight: f64,
    /// Ground truth from simulation; never read by the estimators.
    pub faulty: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementSet {
    pub entries: Vec<Measurement>,
}

impl MeasurementSet {
    pub fn new(entries: Vec<Measurement>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l_scada(&self) -> usize {
        self.entries.iter().filter(|m| !m.kind.is_pmu()).count()
    }

    pub fn l_pmu(&self) -> usize {
        self.entries.iter().filter(|m| m.kind.is_pmu()).count()
    }

    /// L = L_SCADA + 2·L_PMU, the number of real measurements.
    pub fn real_count(&self) -> usize {
        self.l_scada() + 2 * self.l_pmu()
    }

    pub fn fault_mask(&self) -> Vec<bool> {
        self.entries.iter().map(|m| m.faulty).collect()
    }

    /// Measurement values flattened to reals (PMU entries contribute two).
    pub fn digest(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.real_count());
        for m in &self.entries {
            out.push(m.value.re);
            if m.kind.is_pmu() {
                out.push(m.value.im);
            }
        }
        out
    }

    /// Noise-free measurements at state `v`.
    pub fn exact(
        model: &NetworkModel,
        v: &StateVector,
        targets: &[(MeasurementKind, usize)],
    ) -> Result<Self> {
        let h = evaluate_h(v, model, targets)?;
        let entries = targets
            .iter()
            .zip(h)
            .map(|(&(kind, target), value)| Measurement {
                kind,
                target,
                value: if kind == MeasurementKind::VMag {
                    Complex64::new(value.re.max(0.0).sqrt(), 0.0)
                } else {
                    value
                },
                weight: 1.0,
                faulty: false,
            })
            .collect();
        Ok(Self { entries })
    }

    /// Checks targets against the network and weights for positivity.
    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        for (idx, m) in self.entries.iter().enumerate() {
            model.form(m.kind, m.target, idx)?;
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "measurement {idx} has weight {}",
                    m.weight
                )));
            }
            if !(m.value.re.is_finite() && m.value.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("measurement {idx} is not finite")));
            }
        }
        Ok(())
    }
}

/// Which quantities are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementPlan {
    /// SCADA only: |v|, p, q at every bus and p, q at the from end of every
    /// branch (N = 3n + 2m).
    #[default]
    Scada,
    /// The SCADA plan plus PMU voltage phasors at generator buses and PMU
    /// from-end currents on the branches leaving them.
    Mixed,
}

pub fn plan_targets(model: &NetworkModel, plan: MeasurementPlan) -> Vec<(MeasurementKind, usize)> {
    use MeasurementKind::*;
    let n = model.n_buses();
    let m = model.n_branches();
    let mut t = Vec::with_capacity(3 * n + 2 * m);
    for k in 0..n {
        t.extend([(VMag, k), (PInj, k), (QInj, k)]);
    }
    for l in 0..m {
        t.extend([(PFrom, l), (QFrom, l)]);
    }
    if plan == MeasurementPlan::Mixed {
        let mut pmu_bus = vec![false; n];
        for g in &model.net.generators {
            pmu_bus[g.bus] = true;
        }
        pmu_bus[model.reference()] = true;
        t.extend((0..n).filter(|&k| pmu_bus[k]).map(|k| (VPhasor, k)));
        t.extend((0..m).filter(|&l| pmu_bus[model.net.branches[l].from_bus]).map(|l| (IFrom, l)));
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Error magnitudes along the instrument chains. Ratio errors are relative,
/// angle errors in radians, the rest per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorChainConfig {
    pub vt_ratio_bound: f64,
    pub vt_angle_bound: f64,
    pub ct_ratio_bound: f64,
    pub ct_angle_bound: f64,
    pub cab_mean: f64,
    pub cab_std: f64,
    pub cab_angle_std: f64,
    pub ied_std: f64,
    pub cn_gmm: Vec<GmmComponent>,
    /// Probability that an entry is lost in transmission and omitted.
    pub drop_prob: f64,
}

impl Default for ErrorChainConfig {
    fn default() -> Self {
        Self {
            vt_ratio_bound: 0.005,
            vt_angle_bound: 0.001,
            ct_ratio_bound: 0.005,
            ct_angle_bound: 0.001,
            cab_mean: 0.001,
            cab_std: 0.002,
            cab_angle_std: 0.0005,
            ied_std: 0.001,
            cn_gmm: vec![
                GmmComponent { weight: 0.95, mean: 0.0, std: 0.001 },
                GmmComponent { weight: 0.05, mean: 0.0, std: 0.01 },
            ],
            drop_prob: 0.0,
        }
    }
}

impl ErrorChainConfig {
    /// Every error source switched off.
    pub fn zero() -> Self {
        Self {
            vt_ratio_bound: 0.0,
            vt_angle_bound: 0.0,
            ct_ratio_bound: 0.0,
            ct_angle_bound: 0.0,
            cab_mean: 0.0,
            cab_std: 0.0,
            cab_angle_std: 0.0,
            ied_std: 0.0,
            cn_gmm: Vec::new(),
            drop_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("vt_ratio_bound", self.vt_ratio_bound),
            ("vt_angle_bound", self.vt_angle_bound),
            ("ct_ratio_bound", self.ct_ratio_bound),
            ("ct_angle_bound", self.ct_angle_bound),
            ("cab_std", self.cab_std),
            ("cab_angle_std", self.cab_angle_std),
            ("ied_std", self.ied_std),
        ];
        for (name, x) in nonneg {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {x}")));
            }
        }
        if !self.cab_mean.is_finite() {
            return Err(Error::InvalidArgument("cab_mean must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::InvalidArgument(format!("drop_prob {} not in [0, 1]", self.drop_prob)));
        }
        if !self.cn_gmm.is_empty() {
            if self.cn_gmm.iter().any(|c| !(c.weight > 0.0) || !(c.std >= 0.0) || !c.mean.is_finite()) {
                return Err(Error::InvalidArgument(
                    "gmm components need weight > 0, std >= 0 and a finite mean".into(),
                ));
            }
            let total: f64 = self.cn_gmm.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("gmm weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }
}

fn entry_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("std checked").sample(rng)
}

fn uniform(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        rng.gen_range(-bound..=bound)
    }
}

fn gmm(rng: &mut ChaCha8Rng, comps: &[GmmComponent]) -> f64 {
    if comps.is_empty() {
        return 0.0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for c in comps {
        acc += c.weight;
        if u < acc {
            return gauss(rng, c.mean, c.std);
        }
    }
    let last = comps.last().expect("non-empty");
    gauss(rng, last.mean, last.std)
}

/// Systematic part of one instrument transformer: ratio and phase errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransformerBias {
    pub ratio: f64,
    pub angle: f64,
}

/// Systematic transformer errors, drawn once per sensor and held fixed over
/// a time series. Voltage transformers sit at buses; current transformers
/// at every bus (injection) and at both ends of every branch.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorBias {
    pub vt: Vec<TransformerBias>,
    pub ct_bus: Vec<TransformerBias>,
    pub ct_from: Vec<TransformerBias>,
    pub ct_to: Vec<TransformerBias>,
}

impl SensorBias {
    pub fn draw(model: &NetworkModel, cfg: &ErrorChainConfig, seed: u64) -> Self {
        let mut rng = entry_rng(seed, u64::MAX);
        let mut draw = |n: usize, rb: f64, ab: f64| -> Vec<TransformerBias> {
            (0..n)
                .map(|_| TransformerBias { ratio: uniform(&mut rng, rb), angle: uniform(&mut rng, ab) })
                .collect()
        };
        let (n, m) = (model.n_buses(), model.n_branches());
        Self {
            vt: draw(n, cfg.vt_ratio_bound, cfg.vt_angle_bound),
            ct_bus: draw(n, cfg.ct_ratio_bound, cfg.ct_angle_bound),
            ct_from: draw(m, cfg.ct_ratio_bound, cfg.ct_angle_bound),
            ct_to: draw(m, cfg.ct_ratio_bound, cfg.ct_angle_bound),
        }
    }
}

/// Passes a phasor through a transformer and its cable:
/// magnitude |x|(1 + e_T) + e_CAB, angle θ + e^θ_T + e^θ_CAB.
/// The transformer error is the mean of the systematic part and a fresh
/// draw in the same band, so its magnitude never exceeds the bound.
fn chain(
    x: Complex64,
    bias: TransformerBias,
    ratio_bound: f64,
    angle_bound: f64,
    cfg: &ErrorChainConfig,
    rng: &mut ChaCha8Rng,
) -> Complex64 {
    let e_ratio = 0.5 * (bias.ratio + uniform(rng, ratio_bound));
    let e_angle = 0.5 * (bias.angle + uniform(rng, angle_bound));
    let e_cab = gauss(rng, cfg.cab_mean, cfg.cab_std);
    let e_cab_angle = gauss(rng, 0.0, cfg.cab_angle_std);
    let norm = x.norm();
    let unit = if norm > 0.0 { x / norm } else { Complex64::new(1.0, 0.0) };
    let rot = Complex64::from_polar(1.0, e_angle + e_cab_angle);
    x * (1.0 + e_ratio) * rot + unit * rot * e_cab
}

struct ChainInputs<'a> {
    model: &'a NetworkModel,
    v: &'a StateVector,
    i_bus: Vec<Complex64>,
    i_from: Vec<Complex64>,
    i_to: Vec<Complex64>,
}

impl<'a> ChainInputs<'a> {
    fn new(model: &'a NetworkModel, v: &'a StateVector) -> Self {
        let vv = nalgebra::DVector::from_column_slice(&v.v);
        Self {
            model,
            v,
            i_bus: (&model.y * &vv).iter().copied().collect(),
            i_from: (&model.yf * &vv).iter().copied().collect(),
            i_to: (&model.yt * &vv).iter().copied().collect(),
        }
    }

    /// The voltage phasor and current phasor behind a power measurement.
    fn power_pair(&self, kind: MeasurementKind, target: usize, bias: &SensorBias) -> (usize, Complex64, TransformerBias) {
        use MeasurementKind::*;
        let br = |l: usize| &self.model.net.branches[l];
        match kind {
            PInj | QInj => (target, self.i_bus[target], bias.ct_bus[target]),
            PFrom | QFrom => (br(target).from_bus, self.i_from[target], bias.ct_from[target]),
            PTo | QTo => (br(target).to_bus, self.i_to[target], bias.ct_to[target]),
            _ => unreachable!("not a power kind"),
        }
    }
}

fn maybe_drop(entries: Vec<Measurement>, cfg: &ErrorChainConfig, seed: u64) -> Vec<Measurement> {
    if cfg.drop_prob == 0.0 {
        return entries;
    }
    let mut rng = entry_rng(seed, u64::MAX - 1);
    entries.into_iter().filter(|_| rng.gen::<f64>() >= cfg.drop_prob).collect()
}

/// SCADA readings of `targets` at the true state through the voltage and
/// current transformer, cable, IED and communication stages.
pub fn simulate_scada(
    model: &NetworkModel,
    v_true: &StateVector,
    targets: &[(MeasurementKind, usize)],
    cfg: &ErrorChainConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    let bias = SensorBias::draw(model, cfg, seed);
    simulate_scada_biased(model, v_true, targets, cfg, &bias, seed)
}

/// As [`simulate_scada`] with given systematic errors, for time series.
pub fn simulate_scada_biased(
    model: &NetworkModel,
    v_true: &StateVector,
    targets: &[(MeasurementKind, usize)],
    cfg: &ErrorChainConfig,
    bias: &SensorBias,
    seed: u64,
) -> Result<MeasurementSet> {
    cfg.validate()?;
    if let Some(&(kind, _)) = targets.iter().find(|(k, _)| k.is_pmu()) {
        return Err(Error::InvalidArgument(format!("{kind} is not a SCADA quantity")));
    }
    let clean = MeasurementSet::exact(model, v_true, targets)?;
    let inputs = ChainInputs::new(model, v_true);
    let mut entries = Vec::with_capacity(clean.len());
    for (idx, mut m) in clean.entries.into_iter().enumerate() {
        let mut rng = entry_rng(seed, idx as u64);
        let delta = if m.kind == MeasurementKind::VMag {
            let b = bias.vt[m.target];
            let e_vt = 0.5 * (b.ratio + uniform(&mut rng, cfg.vt_ratio_bound));
            let e_cab = gauss(&mut rng, cfg.cab_mean, cfg.cab_std);
            m.value.re * e_vt + e_cab
        } else {
            let (bus, i, ct) = inputs.power_pair(m.kind, m.target, bias);
            let v = inputs.v.v[bus];
            let v2 = chain(v, bias.vt[bus], cfg.vt_ratio_bound, cfg.vt_angle_bound, cfg, &mut rng);
            let i2 = chain(i, ct, cfg.ct_ratio_bound, cfg.ct_angle_bound, cfg, &mut rng);
            let ds = v2 * i2.conj() - v * i.conj();
            if matches!(m.kind, MeasurementKind::PInj | MeasurementKind::PFrom | MeasurementKind::PTo) {
                ds.re
            } else {
                ds.im
            }
        };
        let e_ied = gauss(&mut rng, 0.0, cfg.ied_std);
        let e_cn = gmm(&mut rng, &cfg.cn_gmm);
        m.value.re += delta + e_ied + e_cn;
        entries.push(m);
    }
    Ok(MeasurementSet::new(maybe_drop(entries, cfg, seed)))
}

/// PMU phasors of `targets` at the true state through the transformer and
/// cable stages.
pub fn simulate_pmu(
    model: &NetworkModel,
    v_true: &StateVector,
    targets: &[(MeasurementKind, usize)],
    cfg: &ErrorChainConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    let bias = SensorBias::draw(model, cfg, seed);
    simulate_pmu_biased(model, v_true, targets, cfg, &bias, seed)
}

pub fn simulate_pmu_biased(
    model: &NetworkModel,
    v_true: &StateVector,
    targets: &[(MeasurementKind, usize)],
    cfg: &ErrorChainConfig,
    bias: &SensorBias,
    seed: u64,
) -> Result<MeasurementSet> {
    use MeasurementKind::*;
    cfg.validate()?;
    if let Some(&(kind, _)) = targets.iter().find(|(k, _)| !k.is_pmu()) {
        return Err(Error::InvalidArgument(format!("{kind} is not a PMU quantity")));
    }
    let clean = MeasurementSet::exact(model, v_true, targets)?;
    let mut entries = Vec::with_capacity(clean.len());
    for (idx, mut m) in clean.entries.into_iter().enumerate() {
        // Distinct streams from the SCADA entries of the same seed.
        let mut rng = entry_rng(seed, (1 << 32) + idx as u64);
        let (b, rb, ab) = match m.kind {
            VPhasor => (bias.vt[m.target], cfg.vt_ratio_bound, cfg.vt_angle_bound),
            IInj => (bias.ct_bus[m.target], cfg.ct_ratio_bound, cfg.ct_angle_bound),
            IFrom => (bias.ct_from[m.target], cfg.ct_ratio_bound, cfg.ct_angle_bound),
            _ => (bias.ct_to[m.target], cfg.ct_ratio_bound, cfg.ct_angle_bound),
        };
        m.value = chain(m.value, b, rb, ab, cfg, &mut rng);
        entries.push(m);
    }
    Ok(MeasurementSet::new(maybe_drop(entries, cfg, seed)))
}

/// Adds N(0, factor·max(|m|, floor)) to each real component.
fn perturb(value: f64, factor: f64, rng: &mut ChaCha8Rng) -> f64 {
    value + gauss(rng, 0.0, (factor * value.abs().max(VARIANCE_FLOOR)).sqrt())
}

/// Gaussian noise with variance 0.1·|m| on every real component.
pub fn gaussian_noise(ms: &MeasurementSet, seed: u64) -> MeasurementSet {
    inject_faults(ms, 0.0, seed).expect("p_f = 0 is valid")
}

/// Marks each entry faulty with probability `p_f`, then adds Gaussian noise
/// of variance 0.1·|m| (clean) or 100·|m| (faulty) to each real component.
pub fn inject_faults(ms: &MeasurementSet, p_f: f64, seed: u64) -> Result<MeasurementSet> {
    if !(0.0..=1.0).contains(&p_f) {
        return Err(Error::InvalidArgument(format!("fault probability {p_f} not in [0, 1]")));
    }
    let entries = ms
        .entries
        .iter()
        .enumerate()
        .map(|(idx, m)| {
            let mut rng = entry_rng(seed, idx as u64);
            let faulty = rng.gen::<f64>() < p_f;
            let factor = if faulty { 100.0 } else { 0.1 };
            let re = perturb(m.value.re, factor, &mut rng);
            let im = if m.kind.is_pmu() { perturb(m.value.im, factor, &mut rng) } else { 0.0 };
            Measurement { value: Complex64::new(re, im), faulty, ..m.clone() }
        })
        .collect();
    Ok(MeasurementSet::new(entries))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    kind: MeasurementKind,
    target: usize,
    value_re: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_im: Option<f64>,
    weight: f64,
    #[serde(default)]
    faulty: bool,
}

/// One JSON object per line with a fixed field order.
pub fn write_jsonl(ms: &MeasurementSet) -> String {
    let mut out = String::new();
    for m in &ms.entries {
        let rec = Record {
            kind: m.kind,
            target: m.target,
            value_re: m.value.re,
            value_im: m.kind.is_pmu().then_some(m.value.im),
            weight: m.weight,
            faulty: m.faulty,
        };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("plain struct serializes"));
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<MeasurementSet> {
    let err = |line: usize, msg: String| Error::Format { source_name: "measurements", line, msg };
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| err(line, e.to_string()))?;
        let im = match (rec.kind.is_pmu(), rec.value_im) {
            (true, Some(im)) => im,
            (true, None) => return Err(err(line, format!("{} needs value_im", rec.kind))),
            (false, None) => 0.0,
            (false, Some(_)) => return Err(err(line, format!("{} is real; value_im not allowed", rec.kind))),
        };
        if !(rec.weight > 0.0 && rec.weight.is_finite()) {
            return Err(err(line, format!("weight must be positive, got {}", rec.weight)));
        }
        if !(rec.value_re.is_finite() && im.is_finite()) {
            return Err(err(line, "non-finite value".into()));
        }
        entries.push(Measurement {
            kind: rec.kind,
            target: rec.target,
            value: Complex64::new(rec.value_re, im),
            weight: rec.weight,
            faulty: rec.faulty,
        });
    }
    Ok(MeasurementSet::new(entries))
}
